#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace mcnet {

// Rows are ground truth, columns predictions.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t num_classes);

    // counts[truth[i]][pred[i]] += 1 for every i.
    void accumulate(std::span<const int> truth, std::span<const int> pred);
    void merge(const ConfusionMatrix& other);

    std::size_t num_classes() const { return classes_; }
    std::uint64_t count(std::size_t truth, std::size_t pred) const { return counts_[truth * classes_ + pred]; }
    std::uint64_t total() const;
    const std::vector<std::uint64_t>& counts() const { return counts_; }

    static ConfusionMatrix from_counts(std::size_t num_classes, std::vector<std::uint64_t> counts);

private:
    std::size_t classes_;
    std::vector<std::uint64_t> counts_;
};

double overall_accuracy(const ConfusionMatrix& cm);
// TP / (TP + FP + FN); nullopt for a class that appears in neither truth nor
// prediction.
std::vector<std::optional<double>> iou_per_class(const ConfusionMatrix& cm);
// Mean over the classes that have an IoU.
double mean_iou(const ConfusionMatrix& cm);

struct ClassIoU {
    std::string name;
    std::optional<double> iou;
};

struct MetricsReport {
    double oa = 0.0;
    double miou = 0.0;
    std::vector<ClassIoU> per_class;

    nlohmann::json to_json() const;
    static MetricsReport from_json(const nlohmann::json& j);
};

MetricsReport make_report(const ConfusionMatrix& cm, const std::vector<std::string>& class_names);

}  // namespace mcnet
