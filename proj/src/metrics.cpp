#include "mcnet/metrics.hpp"

#include "mcnet/errors.hpp"

namespace mcnet {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes) : classes_(num_classes), counts_(num_classes * num_classes) {
    if (num_classes == 0) throw ContractError("confusion matrix needs at least one class");
}

ConfusionMatrix ConfusionMatrix::from_counts(std::size_t num_classes, std::vector<std::uint64_t> counts) {
    ConfusionMatrix cm(num_classes);
    if (counts.size() != num_classes * num_classes) {
        throw DimensionError("confusion matrix counts: expected " + std::to_string(num_classes * num_classes) +
                             " entries, got " + std::to_string(counts.size()));
    }
    cm.counts_ = std::move(counts);
    return cm;
}

void ConfusionMatrix::accumulate(std::span<const int> truth, std::span<const int> pred) {
    if (truth.size() != pred.size()) {
        throw ContractError("accumulate: " + std::to_string(truth.size()) + " truth labels vs " +
                            std::to_string(pred.size()) + " predictions");
    }
    const auto c = static_cast<int>(classes_);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= c || pred[i] < 0 || pred[i] >= c) {
            throw ContractError("accumulate: label pair (" + std::to_string(truth[i]) + ", " +
                                std::to_string(pred[i]) + ") at " + std::to_string(i) + " outside [0," +
                                std::to_string(c) + ")");
        }
    }
    for (std::size_t i = 0; i < truth.size(); ++i) ++counts_[truth[i] * classes_ + pred[i]];
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.classes_ != classes_) throw DimensionError("cannot merge confusion matrices of different sizes");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t t = 0;
    for (auto v : counts_) t += v;
    return t;
}

double overall_accuracy(const ConfusionMatrix& cm) {
    const auto total = cm.total();
    if (total == 0) throw ContractError("overall accuracy of an empty confusion matrix");
    std::uint64_t trace = 0;
    for (std::size_t c = 0; c < cm.num_classes(); ++c) trace += cm.count(c, c);
    return static_cast<double>(trace) / static_cast<double>(total);
}

std::vector<std::optional<double>> iou_per_class(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw ContractError("IoU of an empty confusion matrix");
    const std::size_t n = cm.num_classes();
    std::vector<std::optional<double>> out(n);
    for (std::size_t c = 0; c < n; ++c) {
        std::uint64_t row = 0, col = 0;
        for (std::size_t j = 0; j < n; ++j) {
            row += cm.count(c, j);
            col += cm.count(j, c);
        }
        const std::uint64_t tp = cm.count(c, c);
        const std::uint64_t uni = row + col - tp;
        if (uni > 0) out[c] = static_cast<double>(tp) / static_cast<double>(uni);
    }
    return out;
}

double mean_iou(const ConfusionMatrix& cm) {
    double sum = 0.0;
    std::size_t present = 0;
    for (const auto& v : iou_per_class(cm)) {
        if (!v) continue;
        sum += *v;
        ++present;
    }
    if (present == 0) throw ContractError("mean IoU: every class has an empty union");
    return sum / static_cast<double>(present);
}

MetricsReport make_report(const ConfusionMatrix& cm, const std::vector<std::string>& class_names) {
    MetricsReport r;
    r.oa = overall_accuracy(cm);
    r.miou = mean_iou(cm);
    const auto ious = iou_per_class(cm);
    for (std::size_t c = 0; c < ious.size(); ++c) {
        r.per_class.push_back({c < class_names.size() ? class_names[c] : "class_" + std::to_string(c), ious[c]});
    }
    return r;
}

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& c : per_class) {
        per.push_back({{"name", c.name}, {"iou", c.iou ? nlohmann::json(*c.iou) : nlohmann::json(nullptr)}});
    }
    return {{"oa", oa}, {"miou", miou}, {"per_class", per}};
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
    MetricsReport r;
    r.oa = j.at("oa").get<double>();
    r.miou = j.at("miou").get<double>();
    for (const auto& c : j.at("per_class")) {
        ClassIoU e{c.at("name").get<std::string>(), std::nullopt};
        if (!c.at("iou").is_null()) e.iou = c.at("iou").get<double>();
        r.per_class.push_back(e);
    }
    return r;
}

}  // namespace mcnet
