#include "memebg/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "memebg/errors.hpp"

namespace memebg {

using nlohmann::json;

std::size_t ConfusionMatrix::total() const noexcept {
    std::size_t n = 0;
    for (const auto& row : counts)
        for (auto c : row) n += c;
    return n;
}

ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred, std::size_t num_classes,
                          std::vector<std::string> class_names) {
    if (y_true.size() != y_pred.size())
        throw ArgumentError("confusion: " + std::to_string(y_true.size()) + " true labels vs " +
                            std::to_string(y_pred.size()) + " predictions");
    if (num_classes == 0) throw ArgumentError("confusion: need at least one class");
    if (class_names.empty())
        for (std::size_t c = 0; c < num_classes; ++c) class_names.push_back(std::to_string(c));
    if (class_names.size() != num_classes) throw ArgumentError("confusion: class name count mismatch");

    ConfusionMatrix cm{std::move(class_names), std::vector<std::vector<std::size_t>>(
                                                   num_classes, std::vector<std::size_t>(num_classes, 0))};
    for (std::size_t j = 0; j < y_true.size(); ++j) {
        const int t = y_true[j];
        const int p = y_pred[j];
        if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= num_classes ||
            static_cast<std::size_t>(p) >= num_classes)
            throw ArgumentError("confusion: class index out of range at position " + std::to_string(j));
        ++cm.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
    }
    return cm;
}

namespace {

double ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double harmonic(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

}  // namespace

AverageStats macro_average(std::span<const ClassStats> classes) {
    AverageStats avg;
    if (classes.empty()) return avg;
    for (const auto& c : classes) {
        avg.precision += c.precision;
        avg.recall += c.recall;
        avg.f1 += c.f1;
    }
    const double k = static_cast<double>(classes.size());
    avg.precision /= k;
    avg.recall /= k;
    avg.f1 /= k;
    return avg;
}

AverageStats weighted_average(std::span<const ClassStats> classes) {
    AverageStats avg;
    std::size_t total = 0;
    for (const auto& c : classes) {
        const double w = static_cast<double>(c.support);
        avg.precision += w * c.precision;
        avg.recall += w * c.recall;
        avg.f1 += w * c.f1;
        total += c.support;
    }
    if (total == 0) return {};
    const double n = static_cast<double>(total);
    avg.precision /= n;
    avg.recall /= n;
    avg.f1 /= n;
    return avg;
}

ClassificationReport report(const ConfusionMatrix& cm, std::string task) {
    const std::size_t k = cm.num_classes();
    const std::size_t total = cm.total();
    if (k == 0 || total == 0) throw ArgumentError("report: confusion matrix is empty");

    ClassificationReport r;
    r.task = std::move(task);
    r.total_support = total;
    std::size_t trace = 0;
    for (std::size_t c = 0; c < k; ++c) {
        const std::size_t tp = cm.counts[c][c];
        std::size_t predicted = 0;
        std::size_t support = 0;
        for (std::size_t o = 0; o < k; ++o) {
            predicted += cm.counts[o][c];
            support += cm.counts[c][o];
        }
        ClassStats s;
        s.name = c < cm.class_names.size() ? cm.class_names[c] : std::to_string(c);
        s.precision = ratio(tp, predicted);
        s.recall = ratio(tp, support);
        s.f1 = harmonic(s.precision, s.recall);
        s.support = support;
        r.classes.push_back(std::move(s));
        trace += tp;
    }
    r.accuracy = ratio(trace, total);
    r.macro = macro_average(r.classes);
    r.weighted = weighted_average(r.classes);
    return r;
}

double macro_f1(std::span<const int> y_true, std::span<const int> y_pred, std::size_t num_classes) {
    return report(confusion(y_true, y_pred, num_classes)).macro.f1;
}

double weighted_f1(std::span<const int> y_true, std::span<const int> y_pred, std::size_t num_classes) {
    return report(confusion(y_true, y_pred, num_classes)).weighted.f1;
}

double accuracy(std::span<const int> y_true, std::span<const int> y_pred) {
    if (y_true.size() != y_pred.size() || y_true.empty()) throw ArgumentError("accuracy: bad label vectors");
    std::size_t hits = 0;
    for (std::size_t j = 0; j < y_true.size(); ++j) hits += y_true[j] == y_pred[j];
    return ratio(hits, y_true.size());
}

std::string format_fixed(double value, int digits) {
    if (!std::isfinite(value)) return "nan";
    char buf[64];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::fixed);
    std::string text(buf, end);
    const bool negative = !text.empty() && text[0] == '-';
    if (negative) text.erase(0, 1);
    auto dot = text.find('.');
    if (dot == std::string::npos) {
        text += '.';
        dot = text.size() - 1;
    }
    text.append(static_cast<std::size_t>(digits) + 1, '0');
    // digits before rounding position, as a decimal string without the dot
    std::string kept = text.substr(0, dot) + text.substr(dot + 1, static_cast<std::size_t>(digits));
    const bool round_up = text[dot + 1 + static_cast<std::size_t>(digits)] >= '5';
    if (round_up) {
        int i = static_cast<int>(kept.size()) - 1;
        while (i >= 0 && kept[static_cast<std::size_t>(i)] == '9') kept[static_cast<std::size_t>(i--)] = '0';
        if (i < 0)
            kept.insert(kept.begin(), '1');
        else
            ++kept[static_cast<std::size_t>(i)];
    }
    std::string out = kept.substr(0, kept.size() - static_cast<std::size_t>(digits));
    if (digits > 0) out += "." + kept.substr(kept.size() - static_cast<std::size_t>(digits));
    const bool all_zero = std::all_of(out.begin(), out.end(), [](char ch) { return ch == '0' || ch == '.'; });
    return (negative && !all_zero ? "-" : "") + out;
}

std::string render_report_text(const ClassificationReport& r) {
    std::ostringstream out;
    auto line = [&](const std::string& label, const std::string& p, const std::string& rc, const std::string& f,
                    const std::string& s) {
        out << std::left << std::setw(14) << label << std::right << std::setw(10) << p << std::setw(10) << rc
            << std::setw(10) << f << std::setw(10) << s << '\n';
    };
    if (!r.task.empty()) out << r.task << " Classification Performance\n";
    line("Class", "Precision", "Recall", "F1-score", "Support");
    for (const auto& c : r.classes)
        line(c.name, format_fixed(c.precision, 2), format_fixed(c.recall, 2), format_fixed(c.f1, 2),
             std::to_string(c.support));
    const auto total = std::to_string(r.total_support);
    line("Accuracy", "", "", format_fixed(r.accuracy, 2), total);
    line("Macro Avg", format_fixed(r.macro.precision, 2), format_fixed(r.macro.recall, 2),
         format_fixed(r.macro.f1, 2), total);
    line("Weighted Avg", format_fixed(r.weighted.precision, 2), format_fixed(r.weighted.recall, 2),
         format_fixed(r.weighted.f1, 2), total);
    return out.str();
}

namespace {

json avg_json(const AverageStats& a) { return {{"precision", a.precision}, {"recall", a.recall}, {"f1", a.f1}}; }

AverageStats avg_from(const json& j) {
    return {j.at("precision").get<double>(), j.at("recall").get<double>(), j.at("f1").get<double>()};
}

}  // namespace

std::string report_to_json(const ClassificationReport& r) {
    json classes = json::array();
    for (const auto& c : r.classes)
        classes.push_back(
            {{"name", c.name}, {"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}});
    json doc = {{"task", r.task},
                {"classes", classes},
                {"accuracy", r.accuracy},
                {"macro", avg_json(r.macro)},
                {"weighted", avg_json(r.weighted)},
                {"total_support", r.total_support}};
    return doc.dump(2) + "\n";
}

ClassificationReport report_from_json(const std::string& text) {
    try {
        const auto doc = json::parse(text);
        ClassificationReport r;
        r.task = doc.at("task").get<std::string>();
        for (const auto& c : doc.at("classes"))
            r.classes.push_back({c.at("name").get<std::string>(), c.at("precision").get<double>(),
                                 c.at("recall").get<double>(), c.at("f1").get<double>(),
                                 c.at("support").get<std::size_t>()});
        r.accuracy = doc.at("accuracy").get<double>();
        r.macro = avg_from(doc.at("macro"));
        r.weighted = avg_from(doc.at("weighted"));
        r.total_support = doc.at("total_support").get<std::size_t>();
        return r;
    } catch (const json::exception& e) {
        throw FormatError(std::string("report JSON: ") + e.what());
    }
}

std::string confusion_to_csv(const ConfusionMatrix& cm) {
    std::ostringstream out;
    out << "true\\pred";
    for (const auto& name : cm.class_names) out << ',' << name;
    out << '\n';
    for (std::size_t t = 0; t < cm.num_classes(); ++t) {
        out << cm.class_names[t];
        for (auto c : cm.counts[t]) out << ',' << c;
        out << '\n';
    }
    return out.str();
}

}  // namespace memebg
