#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace memebg {

// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
    std::vector<std::string> class_names;
    std::vector<std::vector<std::size_t>> counts;

    std::size_t num_classes() const noexcept { return counts.size(); }
    std::size_t total() const noexcept;

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

// Class names default to "0", "1", ... when not given.
ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred, std::size_t num_classes,
                          std::vector<std::string> class_names = {});

struct ClassStats {
    std::string name;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;

    friend bool operator==(const ClassStats&, const ClassStats&) = default;
};

struct AverageStats {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;

    friend bool operator==(const AverageStats&, const AverageStats&) = default;
};

struct ClassificationReport {
    std::string task;
    std::vector<ClassStats> classes;
    double accuracy = 0.0;
    AverageStats macro;
    AverageStats weighted;
    std::size_t total_support = 0;

    friend bool operator==(const ClassificationReport&, const ClassificationReport&) = default;
};

// Rates with a zero denominator are defined as 0, as is F1 when p + r = 0.
ClassificationReport report(const ConfusionMatrix& cm, std::string task = {});

// Aggregates over per-class rows, as used by report().
AverageStats macro_average(std::span<const ClassStats> classes);
AverageStats weighted_average(std::span<const ClassStats> classes);

double macro_f1(std::span<const int> y_true, std::span<const int> y_pred, std::size_t num_classes);
double weighted_f1(std::span<const int> y_true, std::span<const int> y_pred, std::size_t num_classes);
double accuracy(std::span<const int> y_true, std::span<const int> y_pred);

// Decimal rounding half away from zero, applied to the shortest round-trip
// representation of value so that 0.715 becomes "0.72".
std::string format_fixed(double value, int digits);

// Text table: Class/Precision/Recall/F1-score/Support, then the Accuracy,
// Macro Avg and Weighted Avg rows, two decimals.
std::string render_report_text(const ClassificationReport& r);
std::string report_to_json(const ClassificationReport& r);
ClassificationReport report_from_json(const std::string& text);

// Header row and first column carry class names.
std::string confusion_to_csv(const ConfusionMatrix& cm);

}  // namespace memebg
