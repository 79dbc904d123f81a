#include "msn/metrics.hpp"

#include <cmath>
#include <fstream>
#include <iostream>

#include "msn/errors.hpp"
#include "json.hpp"

namespace msn {

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : num_classes_(num_classes),
      counts_(static_cast<size_t>(num_classes) * num_classes, 0) {
    if (num_classes < 1) throw ValueError("confusion matrix needs at least one class");
}

ConfusionMatrix ConfusionMatrix::from_labels(const std::vector<int>& truth,
                                             const std::vector<int>& predicted, int num_classes) {
    if (truth.size() != predicted.size())
        throw ValueError("confusion: label vectors differ in length");
    ConfusionMatrix cm(num_classes);
    for (size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 1 || truth[i] > num_classes || predicted[i] < 1 ||
            predicted[i] > num_classes)
            throw ValueError("confusion: label out of range 1.." + std::to_string(num_classes) +
                             " at sample " + std::to_string(i));
        cm.at(truth[i], predicted[i])++;
    }
    return cm;
}

int64_t& ConfusionMatrix::at(int true_label, int predicted_label) {
    return counts_[static_cast<size_t>(true_label - 1) * num_classes_ + (predicted_label - 1)];
}

int64_t ConfusionMatrix::at(int true_label, int predicted_label) const {
    return counts_[static_cast<size_t>(true_label - 1) * num_classes_ + (predicted_label - 1)];
}

int64_t ConfusionMatrix::total() const {
    int64_t n = 0;
    for (int64_t c : counts_) n += c;
    return n;
}

int64_t ConfusionMatrix::diagonal_sum() const {
    int64_t n = 0;
    for (int i = 1; i <= num_classes_; ++i) n += at(i, i);
    return n;
}

int64_t ConfusionMatrix::row_total(int true_label) const {
    int64_t n = 0;
    for (int j = 1; j <= num_classes_; ++j) n += at(true_label, j);
    return n;
}

int64_t ConfusionMatrix::col_total(int predicted_label) const {
    int64_t n = 0;
    for (int i = 1; i <= num_classes_; ++i) n += at(i, predicted_label);
    return n;
}

double overall_accuracy(const ConfusionMatrix& cm) {
    const int64_t total = cm.total();
    if (total == 0) throw ValueError("overall_accuracy: empty confusion matrix");
    return static_cast<double>(cm.diagonal_sum()) / static_cast<double>(total);
}

double average_accuracy(const ConfusionMatrix& cm) {
    double acc = 0.0;
    int counted = 0;
    for (int i = 1; i <= cm.num_classes(); ++i) {
        const int64_t row = cm.row_total(i);
        if (row == 0) {
            std::cerr << "average_accuracy: class " << i << " has no true samples, skipping\n";
            continue;
        }
        acc += static_cast<double>(cm.at(i, i)) / static_cast<double>(row);
        ++counted;
    }
    if (counted == 0) throw ValueError("average_accuracy: no class has samples");
    return acc / static_cast<double>(counted);
}

std::optional<double> kappa(const ConfusionMatrix& cm) {
    const int64_t total = cm.total();
    if (total == 0) throw ValueError("kappa: empty confusion matrix");
    const double po = static_cast<double>(cm.diagonal_sum()) / static_cast<double>(total);
    double pe = 0.0;
    for (int i = 1; i <= cm.num_classes(); ++i)
        pe += static_cast<double>(cm.row_total(i)) * static_cast<double>(cm.col_total(i));
    pe /= static_cast<double>(total) * static_cast<double>(total);
    if (pe == 1.0) return std::nullopt;  // single class in both margins
    return (po - pe) / (1.0 - pe);
}

MetricsReport compute_metrics(const ConfusionMatrix& cm) {
    MetricsReport r;
    r.oa = overall_accuracy(cm);
    r.aa = average_accuracy(cm);
    r.kappa = kappa(cm);
    r.n_samples = cm.total();
    for (int i = 1; i <= cm.num_classes(); ++i) {
        const int64_t row = cm.row_total(i);
        r.per_class.push_back(row > 0 ? static_cast<double>(cm.at(i, i)) / static_cast<double>(row)
                                      : 0.0);
    }
    return r;
}

namespace {

MetricSummary summarize(const std::vector<double>& xs) {
    MetricSummary s;
    const double n = static_cast<double>(xs.size());
    for (double x : xs) s.mean += x;
    s.mean /= n;
    if (xs.size() > 1) {
        double acc = 0.0;
        for (double x : xs) acc += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(acc / (n - 1.0));
    }
    return s;
}

}  // namespace

AggregateReport aggregate_runs(const std::vector<MetricsReport>& runs) {
    if (runs.empty()) throw ValueError("aggregate_runs: need at least one report");
    std::vector<double> oa, aa, kp;
    for (const auto& r : runs) {
        oa.push_back(r.oa);
        aa.push_back(r.aa);
        kp.push_back(r.kappa.value_or(0.0));
    }
    AggregateReport agg;
    agg.oa = summarize(oa);
    agg.aa = summarize(aa);
    agg.kappa = summarize(kp);
    agg.n_runs = static_cast<int>(runs.size());
    return agg;
}

void write_metrics_json(const std::filesystem::path& path, const MetricsReport& report) {
    nlohmann::json j;
    j["oa"] = report.oa;
    j["aa"] = report.aa;
    if (report.kappa)
        j["kappa"] = *report.kappa;
    else
        j["kappa"] = nullptr;
    j["per_class"] = report.per_class;
    j["n_samples"] = report.n_samples;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write metrics file " + path.string());
    out << j.dump(2) << "\n";
}

void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm,
                         const std::vector<std::string>& class_names) {
    if (static_cast<int>(class_names.size()) != cm.num_classes())
        throw ValueError("write_confusion_csv: class name count mismatch");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write confusion file " + path.string());
    for (int j = 0; j < cm.num_classes(); ++j) {
        if (j) out << ",";
        out << class_names[static_cast<size_t>(j)];
    }
    out << "\n";
    for (int i = 1; i <= cm.num_classes(); ++i) {
        for (int j = 1; j <= cm.num_classes(); ++j) {
            if (j > 1) out << ",";
            out << cm.at(i, j);
        }
        out << "\n";
    }
}

}  // namespace msn
