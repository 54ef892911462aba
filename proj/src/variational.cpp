#include "metarx/variational.hpp"

namespace metarx {

double estimate_expectation(const std::function<double(const Eigen::VectorXd&)>& g,
                            const VariationalParams& q, int ensemble_size, RngStream& rng) {
    if (ensemble_size < 1) throw std::invalid_argument("estimate_expectation: R must be >= 1");
    double acc = 0.0;
    for (int r = 0; r < ensemble_size; ++r) acc += g(sample_params(q, rng));
    return acc / static_cast<double>(ensemble_size);
}

EnsemblePrediction ensemble_predict(const Eigen::Vector2d& y, const VariationalParams& q,
                                    const TaskModel& task, int ensemble_size, RngStream& rng) {
    if (ensemble_size < 1) throw std::invalid_argument("ensemble_predict: R must be >= 1");
    EnsemblePrediction out;
    if (task.kind == TaskKind::Demod) {
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(task.shape.output);
        for (int r = 0; r < ensemble_size; ++r) {
            Eigen::VectorXd phi = sample_params(q, rng);
            Vec<double> logits =
                model_logits<double>(as_span<double>(phi), task.shape, y);
            acc += softmax_probs(logits);
        }
        out.probs = acc / static_cast<double>(ensemble_size);
    } else {
        double m1 = 0.0, m2 = 0.0;
        for (int r = 0; r < ensemble_size; ++r) {
            Eigen::VectorXd phi = sample_params(q, rng);
            const double pred = phi.dot(y);
            m1 += pred;
            m2 += pred * pred;
        }
        m1 /= ensemble_size;
        m2 /= ensemble_size;
        out.mean = m1;
        out.variance = 1.0 / task.beta + std::max(0.0, m2 - m1 * m1);
    }
    return out;
}

}  // namespace metarx
