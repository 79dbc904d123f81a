#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace msn {

/// L x L count matrix; rows are true labels, columns predictions, both 1..L.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(int num_classes);

    static ConfusionMatrix from_labels(const std::vector<int>& truth,
                                       const std::vector<int>& predicted, int num_classes);

    int num_classes() const { return num_classes_; }
    int64_t& at(int true_label, int predicted_label);
    int64_t at(int true_label, int predicted_label) const;
    int64_t total() const;
    int64_t diagonal_sum() const;
    int64_t row_total(int true_label) const;
    int64_t col_total(int predicted_label) const;

private:
    int num_classes_;
    std::vector<int64_t> counts_;
};

struct MetricsReport {
    double oa = 0.0;
    double aa = 0.0;
    std::optional<double> kappa;  // empty when expected agreement is 1
    std::vector<double> per_class;
    int64_t n_samples = 0;
};

/// Correct fraction: diagonal over total.
double overall_accuracy(const ConfusionMatrix& cm);

/// Mean of per-class accuracies; classes with no true samples are skipped
/// (with a stderr note).
double average_accuracy(const ConfusionMatrix& cm);

/// Chance-corrected agreement (P_o - P_e) / (1 - P_e); empty when P_e == 1.
std::optional<double> kappa(const ConfusionMatrix& cm);

MetricsReport compute_metrics(const ConfusionMatrix& cm);

struct MetricSummary {
    double mean = 0.0;
    double stddev = 0.0;  // sample (n-1); 0 for a single run
};

struct AggregateReport {
    MetricSummary oa, aa, kappa;
    int n_runs = 0;
};

AggregateReport aggregate_runs(const std::vector<MetricsReport>& runs);

void write_metrics_json(const std::filesystem::path& path, const MetricsReport& report);

/// Header row of class names, then L rows of L comma-separated counts.
void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm,
                         const std::vector<std::string>& class_names);

}  // namespace msn
