#include "memebg/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "memebg/errors.hpp"

namespace memebg {

int TaskSchema::class_index(const std::string& label) const {
    for (std::size_t c = 0; c < classes.size(); ++c)
        if (classes[c] == label) return static_cast<int>(c);
    std::string allowed;
    for (const auto& c : classes) allowed += (allowed.empty() ? "" : ",") + c;
    throw SchemaError("label '" + label + "' is not a class of task " + name + " {" + allowed + "}");
}

void TaskSchema::validate() const {
    if (name.empty()) throw SchemaError("task name must not be empty");
    if (classes.size() < 2) throw SchemaError("task " + name + " needs at least 2 classes");
    std::set<std::string> seen(classes.begin(), classes.end());
    if (seen.size() != classes.size()) throw SchemaError("task " + name + " has duplicate class names");
}

std::vector<TaskSchema> default_schemas() {
    return {
        {"TE", {"A", "B"}},
        {"ICM", {"A", "B"}},
        {"EXP", {"0", "1", "2"}},
    };
}

std::size_t EmbeddingDataset::task_index(const std::string& name) const {
    for (std::size_t t = 0; t < schemas.size(); ++t)
        if (schemas[t].name == name) return t;
    throw SchemaError("dataset has no task named '" + name + "'");
}

void EmbeddingDataset::validate() const {
    const std::size_t n = ids.size();
    if (x.rows() != n)
        throw ShapeError("dataset has " + std::to_string(n) + " ids but embedding matrix " + x.shape_string());
    if (labels.size() != schemas.size()) throw SchemaError("dataset label columns do not match its schemas");
    std::unordered_set<std::string> seen;
    for (const auto& id : ids)
        if (!seen.insert(id).second) throw ArgumentError("duplicate sample id '" + id + "'");
    for (std::size_t t = 0; t < schemas.size(); ++t) {
        schemas[t].validate();
        if (labels[t].size() != n)
            throw ShapeError("task " + schemas[t].name + " has " + std::to_string(labels[t].size()) +
                             " labels for " + std::to_string(n) + " samples");
        for (int y : labels[t])
            if (y < 0 || static_cast<std::size_t>(y) >= schemas[t].num_classes())
                throw SchemaError("label index " + std::to_string(y) + " out of range for task " + schemas[t].name);
    }
    if (!x.all_finite()) throw ParseError("dataset embeddings contain non-finite values");
}

EmbeddingDataset EmbeddingDataset::subset(const std::vector<std::size_t>& rows) const {
    EmbeddingDataset out;
    out.schemas = schemas;
    out.x = gather_rows(x, rows);
    out.ids.reserve(rows.size());
    for (auto r : rows) out.ids.push_back(ids[r]);
    out.labels.resize(labels.size());
    for (std::size_t t = 0; t < labels.size(); ++t) {
        out.labels[t].reserve(rows.size());
        for (auto r : rows) out.labels[t].push_back(labels[t][r]);
    }
    return out;
}

EmbeddingDataset EmbeddingDataset::select_tasks(const std::vector<std::string>& names) const {
    EmbeddingDataset out;
    out.ids = ids;
    out.x = x;
    for (const auto& name : names) {
        const auto t = task_index(name);
        out.schemas.push_back(schemas[t]);
        out.labels.push_back(labels[t]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_csv_line(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        cells.push_back(line.substr(start, comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return cells;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ArgumentError("cannot open " + path.string());
    return in;
}

void strip_bom(std::string& line) {
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
        static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF)
        line.erase(0, 3);
}

double parse_cell(const std::string& raw, const std::filesystem::path& path, std::size_t line_no,
                  std::size_t col) {
    const std::string cell = trim(raw);
    double value = 0.0;
    const auto* first = cell.data();
    const auto* last = cell.data() + cell.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (cell.empty() || ec != std::errc() || ptr != last || !std::isfinite(value)) {
        std::ostringstream msg;
        msg << path.string() << ": row " << line_no << ", column " << col << ": cannot parse '" << cell
            << "' as a number";
        throw ParseError(msg.str());
    }
    return value;
}

struct EmbeddingRows {
    std::vector<std::string> ids;
    std::vector<std::vector<float>> rows;
};

EmbeddingRows read_embeddings(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path.string() + ": missing header");
    strip_bom(line);
    const auto header = split_csv_line(line);
    if (header.size() < 2 || lower(trim(header[0])) != "id")
        throw ParseError(path.string() + ": header must be id,e0,e1,...");
    for (std::size_t c = 1; c < header.size(); ++c)
        if (trim(header[c]) != "e" + std::to_string(c - 1))
            throw ParseError(path.string() + ": header column " + std::to_string(c) + " should be e" +
                             std::to_string(c - 1) + ", got '" + header[c] + "'");
    const std::size_t d = header.size() - 1;

    EmbeddingRows out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty() || trim(line) == "\r") continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != d + 1)
            throw ParseError(path.string() + ": row " + std::to_string(line_no) + " has " +
                             std::to_string(cells.size()) + " cells, expected " + std::to_string(d + 1));
        out.ids.push_back(trim(cells[0]));
        std::vector<float> row(d);
        for (std::size_t c = 0; c < d; ++c)
            row[c] = static_cast<float>(parse_cell(cells[c + 1], path, line_no, c + 1));
        out.rows.push_back(std::move(row));
    }
    return out;
}

}  // namespace

EmbeddingDataset load_dataset(const std::filesystem::path& embeddings_csv,
                              const std::filesystem::path& labels_csv,
                              const std::vector<TaskSchema>& schemas) {
    for (const auto& s : schemas) s.validate();
    auto emb = read_embeddings(embeddings_csv);

    auto in = open_input(labels_csv);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(labels_csv.string() + ": missing header");
    strip_bom(line);
    const auto header = split_csv_line(line);
    if (header.empty() || lower(trim(header[0])) != "id")
        throw ParseError(labels_csv.string() + ": header must start with id");
    // Column position for every schema task, matched case-insensitively.
    std::vector<std::size_t> column_of(schemas.size(), 0);
    for (std::size_t t = 0; t < schemas.size(); ++t) {
        for (std::size_t c = 1; c < header.size(); ++c)
            if (lower(trim(header[c])) == lower(schemas[t].name)) column_of[t] = c;
        if (column_of[t] == 0)
            throw SchemaError(labels_csv.string() + ": no column for task " + schemas[t].name);
    }

    std::unordered_map<std::string, std::vector<int>> labels_by_id;
    std::vector<std::string> label_order;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw ParseError(labels_csv.string() + ": row " + std::to_string(line_no) + " has " +
                             std::to_string(cells.size()) + " cells, expected " + std::to_string(header.size()));
        const std::string id = trim(cells[0]);
        std::vector<int> row(schemas.size());
        for (std::size_t t = 0; t < schemas.size(); ++t) {
            try {
                row[t] = schemas[t].class_index(trim(cells[column_of[t]]));
            } catch (const SchemaError& e) {
                throw SchemaError(labels_csv.string() + ": row " + std::to_string(line_no) + ": " + e.what());
            }
        }
        if (!labels_by_id.emplace(id, std::move(row)).second)
            throw ArgumentError(labels_csv.string() + ": duplicate id '" + id + "'");
        label_order.push_back(id);
    }

    std::unordered_set<std::string> emb_ids;
    std::vector<std::string> unmatched;
    for (const auto& id : emb.ids) {
        if (!emb_ids.insert(id).second) throw ArgumentError(embeddings_csv.string() + ": duplicate id '" + id + "'");
        if (!labels_by_id.contains(id)) unmatched.push_back(id);
    }
    for (const auto& id : label_order)
        if (!emb_ids.contains(id)) unmatched.push_back(id);
    if (!unmatched.empty()) {
        std::string list;
        for (const auto& id : unmatched) list += (list.empty() ? "" : ", ") + id;
        throw JoinError("ids present in only one of the embeddings/labels files: " + list);
    }

    EmbeddingDataset ds;
    ds.schemas = schemas;
    const std::size_t n = emb.ids.size();
    const std::size_t d = emb.rows.empty() ? 0 : emb.rows.front().size();
    ds.x = Matrix(n, d);
    ds.labels.assign(schemas.size(), std::vector<int>(n));
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t c = 0; c < d; ++c) ds.x(j, c) = static_cast<double>(emb.rows[j][c]);
        const auto& row = labels_by_id.at(emb.ids[j]);
        for (std::size_t t = 0; t < schemas.size(); ++t) ds.labels[t][j] = row[t];
    }
    ds.ids = std::move(emb.ids);
    ds.validate();
    return ds;
}

void save_dataset(const EmbeddingDataset& ds, const std::filesystem::path& embeddings_csv,
                  const std::filesystem::path& labels_csv) {
    ds.validate();
    std::ofstream emb(embeddings_csv, std::ios::binary);
    if (!emb) throw ArgumentError("cannot write " + embeddings_csv.string());
    emb << "id";
    for (std::size_t c = 0; c < ds.dim(); ++c) emb << ",e" << c;
    emb << '\n';
    char buf[64];
    for (std::size_t j = 0; j < ds.size(); ++j) {
        emb << ds.ids[j];
        for (std::size_t c = 0; c < ds.dim(); ++c) {
            const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, static_cast<float>(ds.x(j, c)));
            emb << ',' << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
        }
        emb << '\n';
    }

    std::ofstream lab(labels_csv, std::ios::binary);
    if (!lab) throw ArgumentError("cannot write " + labels_csv.string());
    lab << "id";
    for (const auto& s : ds.schemas) lab << ',' << lower(s.name);
    lab << '\n';
    for (std::size_t j = 0; j < ds.size(); ++j) {
        lab << ds.ids[j];
        for (std::size_t t = 0; t < ds.schemas.size(); ++t) lab << ',' << ds.schemas[t].classes[ds.labels[t][j]];
        lab << '\n';
    }
    if (!emb || !lab) throw ArgumentError("write failed for dataset files");
}

// ---------------------------------------------------------------------------
// Splitting

namespace {

std::map<std::vector<int>, std::vector<std::size_t>> group_by_tuple(const EmbeddingDataset& ds) {
    std::map<std::vector<int>, std::vector<std::size_t>> groups;
    for (std::size_t j = 0; j < ds.size(); ++j) {
        std::vector<int> key(ds.labels.size());
        for (std::size_t t = 0; t < ds.labels.size(); ++t) key[t] = ds.labels[t][j];
        groups[key].push_back(j);
    }
    return groups;
}

}  // namespace

std::size_t count_singleton_tuples(const EmbeddingDataset& ds) {
    std::size_t count = 0;
    for (const auto& [key, members] : group_by_tuple(ds))
        if (members.size() == 1) ++count;
    return count;
}

Split stratified_split(const EmbeddingDataset& ds, double fraction, Rng& rng) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw ArgumentError("split fraction must lie in (0, 1), got " + std::to_string(fraction));
    if (ds.size() < 2) throw ArgumentError("cannot split a dataset with fewer than 2 samples");

    auto groups = group_by_tuple(ds);
    const auto quota = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(ds.size())));

    struct Share {
        std::vector<std::size_t>* members;
        std::size_t take;
        double remainder;
        std::size_t order;
    };
    std::vector<Share> shares;
    std::size_t assigned = 0;
    std::size_t order = 0;
    for (auto& [key, members] : groups) {
        rng.shuffle(members);
        const double exact = fraction * static_cast<double>(members.size());
        std::size_t take = members.size() == 1 ? 1 : static_cast<std::size_t>(std::floor(exact));
        const double remainder = members.size() == 1 ? 0.0 : exact - std::floor(exact);
        shares.push_back({&members, take, remainder, order++});
        assigned += take;
    }

    if (assigned < quota) {
        std::vector<Share*> candidates;
        for (auto& s : shares)
            if (s.members->size() > 1 && s.take < s.members->size()) candidates.push_back(&s);
        std::stable_sort(candidates.begin(), candidates.end(), [](const Share* a, const Share* b) {
            if (a->remainder != b->remainder) return a->remainder > b->remainder;
            return a->order < b->order;
        });
        for (std::size_t i = 0; i < candidates.size() && assigned < quota; ++i) {
            ++candidates[i]->take;
            ++assigned;
        }
    }

    std::vector<std::size_t> train_rows, test_rows;
    for (const auto& s : shares) {
        train_rows.insert(train_rows.end(), s.members->begin(), s.members->begin() + static_cast<long>(s.take));
        test_rows.insert(test_rows.end(), s.members->begin() + static_cast<long>(s.take), s.members->end());
    }
    std::sort(train_rows.begin(), train_rows.end());
    std::sort(test_rows.begin(), test_rows.end());
    return {ds.subset(train_rows), ds.subset(test_rows)};
}

// ---------------------------------------------------------------------------
// Synthetic data

void SyntheticSpec::validate() const {
    if (n == 0) throw ArgumentError("synthetic spec: n must be >= 1");
    if (d == 0 || k == 0) throw ArgumentError("synthetic spec: d and k must be >= 1");
    if (k > d) throw ArgumentError("synthetic spec: k must be <= d (got k=" + std::to_string(k) + ", d=" + std::to_string(d) + ")");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
        throw ArgumentError("synthetic spec: noise_sigma must be >= 0");
    if (!(coupling >= 0.0 && coupling <= 1.0)) throw ArgumentError("synthetic spec: coupling must lie in [0, 1]");
    if (schemas.empty()) throw ArgumentError("synthetic spec: at least one task is required");
    for (const auto& s : schemas) s.validate();
    if (k < schemas.size() + 1)
        throw ArgumentError("synthetic spec: k must be >= number of tasks + 1 (got k=" + std::to_string(k) + ")");
    if (!class_priors.empty()) {
        if (class_priors.size() != schemas.size())
            throw ArgumentError("synthetic spec: need one prior vector per task");
        for (std::size_t t = 0; t < schemas.size(); ++t) {
            const auto& p = class_priors[t];
            if (p.size() != schemas[t].num_classes())
                throw ArgumentError("synthetic spec: priors for " + schemas[t].name + " need " +
                                    std::to_string(schemas[t].num_classes()) + " entries");
            double sum = 0.0;
            for (double v : p) {
                if (!(v > 0.0)) throw ArgumentError("synthetic spec: priors must be > 0");
                sum += v;
            }
            if (std::abs(sum - 1.0) > 1e-9)
                throw ArgumentError("synthetic spec: priors for " + schemas[t].name + " must sum to 1");
        }
    }
}

std::vector<double> SyntheticSpec::priors_for(std::size_t t) const {
    if (!class_priors.empty()) return class_priors[t];
    const auto c = schemas[t].num_classes();
    return std::vector<double>(c, 1.0 / static_cast<double>(c));
}

double inverse_normal_cdf(double p) {
    if (!(p > 0.0 && p < 1.0)) throw ArgumentError("inverse_normal_cdf: p must lie in (0, 1)");
    // Acklam's rational approximation followed by one Halley step.
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double low = 0.02425;
    double x;
    if (p < low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    const double u = e * std::sqrt(2.0 * 3.14159265358979323846) * std::exp(x * x / 2.0);
    return x - u / (1.0 + x * u / 2.0);
}

namespace {

// Gram-Schmidt on Gaussian draws; returns `count` orthonormal k-vectors.
std::vector<std::vector<double>> random_orthonormal(std::size_t count, std::size_t k, Rng& rng) {
    std::vector<std::vector<double>> basis;
    while (basis.size() < count) {
        std::vector<double> v(k);
        for (double& e : v) e = rng.normal();
        for (const auto& u : basis) {
            const double dot = std::inner_product(v.begin(), v.end(), u.begin(), 0.0);
            for (std::size_t i = 0; i < k; ++i) v[i] -= dot * u[i];
        }
        const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
        if (norm < 1e-8) continue;
        for (double& e : v) e /= norm;
        basis.push_back(std::move(v));
    }
    return basis;
}

}  // namespace

EmbeddingDataset generate_synthetic(const SyntheticSpec& spec, Rng& rng) {
    spec.validate();
    const std::size_t tasks = spec.schemas.size();

    const Matrix mixing = gauss_sample(rng, spec.d, spec.k, 0.0, 1.0 / std::sqrt(static_cast<double>(spec.k)));

    const auto basis = random_orthonormal(tasks + 1, spec.k, rng);
    const double shared = std::sqrt(spec.coupling);
    const double own = std::sqrt(1.0 - spec.coupling);
    std::vector<std::vector<double>> directions(tasks, std::vector<double>(spec.k));
    for (std::size_t t = 0; t < tasks; ++t)
        for (std::size_t i = 0; i < spec.k; ++i) directions[t][i] = shared * basis[0][i] + own * basis[t + 1][i];

    std::vector<std::vector<double>> thresholds(tasks);
    for (std::size_t t = 0; t < tasks; ++t) {
        const auto priors = spec.priors_for(t);
        double cumulative = 0.0;
        for (std::size_t c = 0; c + 1 < priors.size(); ++c) {
            cumulative += priors[c];
            thresholds[t].push_back(inverse_normal_cdf(cumulative));
        }
    }

    EmbeddingDataset ds;
    ds.schemas = spec.schemas;
    ds.x = Matrix(spec.n, spec.d);
    ds.labels.assign(tasks, std::vector<int>(spec.n));
    ds.ids.reserve(spec.n);
    std::vector<double> z(spec.k);
    char id_buf[32];
    for (std::size_t j = 0; j < spec.n; ++j) {
        std::snprintf(id_buf, sizeof id_buf, "syn%05zu", j);
        ds.ids.emplace_back(id_buf);
        for (double& e : z) e = rng.normal();
        for (std::size_t t = 0; t < tasks; ++t) {
            const double score = std::inner_product(z.begin(), z.end(), directions[t].begin(), 0.0);
            const auto& cuts = thresholds[t];
            ds.labels[t][j] = static_cast<int>(std::upper_bound(cuts.begin(), cuts.end(), score) - cuts.begin());
        }
        auto row = ds.x.row(j);
        for (std::size_t r = 0; r < spec.d; ++r) {
            double v = 0.0;
            for (std::size_t i = 0; i < spec.k; ++i) v += mixing(r, i) * z[i];
            row[r] = v;
        }
        for (std::size_t r = 0; r < spec.d; ++r) row[r] += spec.noise_sigma * rng.normal();
    }
    return ds;
}

}  // namespace memebg
