#include "autods/model/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "autods/error.hpp"

namespace autods::model {

namespace {

struct Counts {
    double tp = 0, fp = 0, fn = 0;
};

void prf(const Counts& c, double& precision, double& recall, double& f1) {
    precision = c.tp + c.fp > 0 ? c.tp / (c.tp + c.fp) : 0.0;
    recall = c.tp + c.fn > 0 ? c.tp / (c.tp + c.fn) : 0.0;
    f1 = precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

}  // namespace

std::map<std::string, double> MetricSet::values() const {
    if (task == Task::classification) return {{"accuracy", accuracy}, {"f1", f1}, {"precision", precision}, {"recall", recall}};
    return {{"rmse", rmse}, {"r2", r2}};
}

double MetricSet::get(const std::string& metric) const {
    const auto v = values();
    const auto it = v.find(metric);
    if (it == v.end()) fail(ErrorKind::config, "metric '" + metric + "' is not defined for " + to_string(task));
    return it->second;
}

const char* primary_metric(Task task) noexcept { return task == Task::classification ? "f1" : "r2"; }

MetricSet compute_metrics(std::span<const double> y_true, std::span<const double> y_pred, Task task,
                          double positive_label) {
    if (y_true.size() != y_pred.size()) fail(ErrorKind::domain, "y_true and y_pred differ in length");
    if (y_true.empty()) fail(ErrorKind::domain, "cannot compute metrics on zero rows");
    MetricSet m;
    m.task = task;
    const double n = static_cast<double>(y_true.size());
    if (task == Task::regression) {
        double mean = 0.0;
        for (double v : y_true) mean += v;
        mean /= n;
        double sse = 0.0, sst = 0.0;
        for (std::size_t i = 0; i < y_true.size(); ++i) {
            sse += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
            sst += (y_true[i] - mean) * (y_true[i] - mean);
        }
        m.rmse = std::sqrt(sse / n);
        m.r2 = sst > 0.0 ? 1.0 - sse / sst : (sse == 0.0 ? 1.0 : 0.0);
        return m;
    }
    std::vector<double> labels(y_true.begin(), y_true.end());
    labels.insert(labels.end(), y_pred.begin(), y_pred.end());
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    double correct = 0.0;
    for (std::size_t i = 0; i < y_true.size(); ++i) correct += y_true[i] == y_pred[i];
    m.accuracy = correct / n;

    auto counts_for = [&](double label) {
        Counts c;
        for (std::size_t i = 0; i < y_true.size(); ++i) {
            const bool t = y_true[i] == label, p = y_pred[i] == label;
            c.tp += t && p;
            c.fp += !t && p;
            c.fn += t && !p;
        }
        return c;
    };
    if (labels.size() <= 2) {
        const Counts c = counts_for(positive_label);
        if (c.tp + c.fp == 0) m.warnings.push_back("no predicted positives: precision defined as 0");
        prf(c, m.precision, m.recall, m.f1);
        return m;
    }
    for (double label : labels) {
        const Counts c = counts_for(label);
        if (c.tp + c.fp == 0) m.warnings.push_back("no predictions of label " + std::to_string(label) + ": precision defined as 0");
        double p, r, f;
        prf(c, p, r, f);
        m.precision += p;
        m.recall += r;
        m.f1 += f;
    }
    const double k = static_cast<double>(labels.size());
    m.precision /= k;
    m.recall /= k;
    m.f1 /= k;
    return m;
}

nlohmann::json to_json(const MetricSet& m) {
    nlohmann::json j = m.values();
    if (!m.warnings.empty()) j["warnings"] = m.warnings;
    return j;
}

}  // namespace autods::model
