#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "dcrd/common.hpp"

namespace dcrd {

using FeatureVec = std::vector<float>;

// One hidden affine layer with ReLU, then a 2-logit output. hidden_dim 0
// collapses to a direct affine classifier.
struct MlpParams {
    int input_dim = 0;
    int hidden_dim = 64;
    std::uint64_t seed = 0;
    std::vector<float> w1;  // [input_dim x hidden_dim]
    std::vector<float> b1;  // [hidden_dim]
    std::vector<float> w2;  // [max(hidden_dim, input_dim) x 2]
    std::vector<float> b2;  // [2]

    std::size_t size() const { return w1.size() + b1.size() + w2.size() + b2.size(); }
};

struct ConflictPrediction {
    double prob_conflict = 0.5;
    bool label = false;
    double threshold = 0.5;
};

struct PredictorReport {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    int tp = 0, tn = 0, fp = 0, fn = 0;
};

struct PredictorTrainConfig {
    int epochs = 60;
    int batch = 16;
    float learning_rate = 1e-2f;
    std::uint64_t seed = 0;
    int hidden_dim = 64;
};

inline MlpParams init_predictor(int input_dim, int hidden_dim, std::uint64_t seed) {
    if (input_dim < 1) throw ConfigError("predictor input_dim must be >= 1");
    if (hidden_dim < 0) throw ConfigError("predictor hidden_dim must be >= 0");
    MlpParams p;
    p.input_dim = input_dim;
    p.hidden_dim = hidden_dim;
    p.seed = seed;
    Rng rng(derive_seed(seed, "predictor-init"));
    const int in2 = hidden_dim > 0 ? hidden_dim : input_dim;
    p.w1.assign(static_cast<std::size_t>(input_dim) * hidden_dim, 0.0f);
    p.b1.assign(static_cast<std::size_t>(hidden_dim), 0.0f);
    p.w2.assign(static_cast<std::size_t>(in2) * 2, 0.0f);
    p.b2.assign(2, 0.0f);
    const float s1 = hidden_dim > 0 ? std::sqrt(2.0f / static_cast<float>(input_dim)) : 0.0f;
    for (float& w : p.w1) w = static_cast<float>(rng.gaussian()) * s1;
    const float s2 = std::sqrt(2.0f / static_cast<float>(in2));
    for (float& w : p.w2) w = static_cast<float>(rng.gaussian()) * s2;
    return p;
}

namespace detail {

inline void predictor_logits(const MlpParams& p, const float* x, float* hidden, float out[2]) {
    const float* z = x;
    if (p.hidden_dim > 0) {
        for (int j = 0; j < p.hidden_dim; ++j) hidden[j] = p.b1[static_cast<std::size_t>(j)];
        for (int i = 0; i < p.input_dim; ++i) {
            const float xi = x[i];
            const float* row = p.w1.data() + static_cast<std::size_t>(i) * p.hidden_dim;
            for (int j = 0; j < p.hidden_dim; ++j) hidden[j] += xi * row[j];
        }
        for (int j = 0; j < p.hidden_dim; ++j) hidden[j] = std::max(hidden[j], 0.0f);
        z = hidden;
    }
    const int in2 = p.hidden_dim > 0 ? p.hidden_dim : p.input_dim;
    out[0] = p.b2[0];
    out[1] = p.b2[1];
    for (int i = 0; i < in2; ++i) {
        out[0] += z[i] * p.w2[static_cast<std::size_t>(i) * 2];
        out[1] += z[i] * p.w2[static_cast<std::size_t>(i) * 2 + 1];
    }
}

}  // namespace detail

inline ConflictPrediction predict(const MlpParams& params, const FeatureVec& features,
                                  double threshold = 0.5) {
    if (static_cast<int>(features.size()) != params.input_dim)
        throw InputError("feature dimension mismatch");
    std::vector<float> hidden(static_cast<std::size_t>(std::max(params.hidden_dim, 1)));
    float logits[2];
    detail::predictor_logits(params, features.data(), hidden.data(), logits);
    const double m = std::max(logits[0], logits[1]);
    const double e0 = std::exp(logits[0] - m);
    const double e1 = std::exp(logits[1] - m);
    ConflictPrediction pred;
    pred.prob_conflict = e1 / (e0 + e1);
    pred.threshold = threshold;
    pred.label = pred.prob_conflict >= threshold;
    return pred;
}

// Mini-batch Adam on binary cross-entropy over 2-class softmax.
inline MlpParams train_predictor(const std::vector<FeatureVec>& features,
                                 const std::vector<bool>& labels,
                                 const PredictorTrainConfig& cfg, float* final_loss = nullptr) {
    if (features.size() != labels.size()) throw InputError("features/labels size mismatch");
    if (features.size() < 2) throw InputError("need at least 2 training examples");
    const int dim = static_cast<int>(features.front().size());
    for (const auto& f : features)
        if (static_cast<int>(f.size()) != dim) throw InputError("inconsistent feature dimension");
    const bool has_pos = std::find(labels.begin(), labels.end(), true) != labels.end();
    const bool has_neg = std::find(labels.begin(), labels.end(), false) != labels.end();
    if (!has_pos || !has_neg) throw InputError("training data must contain both classes");

    MlpParams p = init_predictor(dim, cfg.hidden_dim, cfg.seed);
    if (cfg.epochs == 0) return p;

    const std::size_t n = p.size();
    std::vector<float> flat_grads(n, 0.0f);
    std::vector<float> m(n, 0.0f), v(n, 0.0f);
    // gradient views share the parameter layout: w1, b1, w2, b2
    auto gw1 = flat_grads.data();
    auto gb1 = gw1 + p.w1.size();
    auto gw2 = gb1 + p.b1.size();
    auto gb2 = gw2 + p.w2.size();

    Rng rng(derive_seed(cfg.seed, "predictor-train"));
    std::vector<std::size_t> order(features.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<float> hidden(static_cast<std::size_t>(std::max(p.hidden_dim, 1)));
    const float beta1 = 0.9f, beta2 = 0.999f, eps = 1e-8f;
    int step = 0;
    float last_loss = 0.0f;
    const int in2 = p.hidden_dim > 0 ? p.hidden_dim : p.input_dim;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
            std::fill(flat_grads.begin(), flat_grads.end(), 0.0f);
            double loss_sum = 0.0;
            for (std::size_t bi = start; bi < stop; ++bi) {
                const auto& x = features[order[bi]];
                const int y = labels[order[bi]] ? 1 : 0;
                float logits[2];
                detail::predictor_logits(p, x.data(), hidden.data(), logits);
                const float mx = std::max(logits[0], logits[1]);
                const float e0 = std::exp(logits[0] - mx);
                const float e1 = std::exp(logits[1] - mx);
                const float inv = 1.0f / (e0 + e1);
                const float p0 = e0 * inv, p1 = e1 * inv;
                loss_sum += -std::log(std::max(y == 1 ? p1 : p0, 1e-30f));
                float dl[2] = {p0, p1};
                dl[y] -= 1.0f;
                const float* z = p.hidden_dim > 0 ? hidden.data() : x.data();
                gb2[0] += dl[0];
                gb2[1] += dl[1];
                if (p.hidden_dim > 0) {
                    for (int i = 0; i < in2; ++i) {
                        gw2[static_cast<std::size_t>(i) * 2] += z[i] * dl[0];
                        gw2[static_cast<std::size_t>(i) * 2 + 1] += z[i] * dl[1];
                        if (hidden[static_cast<std::size_t>(i)] > 0.0f) {
                            const float dh = dl[0] * p.w2[static_cast<std::size_t>(i) * 2] +
                                             dl[1] * p.w2[static_cast<std::size_t>(i) * 2 + 1];
                            gb1[i] += dh;
                            for (int j = 0; j < p.input_dim; ++j)
                                gw1[static_cast<std::size_t>(j) * p.hidden_dim + i] += x[static_cast<std::size_t>(j)] * dh;
                        }
                    }
                } else {
                    for (int i = 0; i < in2; ++i) {
                        gw2[static_cast<std::size_t>(i) * 2] += z[i] * dl[0];
                        gw2[static_cast<std::size_t>(i) * 2 + 1] += z[i] * dl[1];
                    }
                }
            }
            const float bsz = static_cast<float>(stop - start);
            last_loss = static_cast<float>(loss_sum / bsz);
            if (!std::isfinite(last_loss))
                throw NumericError("predictor training diverged at step " + std::to_string(step));
            ++step;
            const float bc1 = 1.0f - std::pow(beta1, static_cast<float>(step));
            const float bc2 = 1.0f - std::pow(beta2, static_cast<float>(step));
            auto update = [&](std::vector<float>& w, std::size_t off) {
                for (std::size_t i = 0; i < w.size(); ++i) {
                    const float g = flat_grads[off + i] / bsz;
                    m[off + i] = beta1 * m[off + i] + (1.0f - beta1) * g;
                    v[off + i] = beta2 * v[off + i] + (1.0f - beta2) * g * g;
                    w[i] -= cfg.learning_rate * (m[off + i] / bc1) /
                            (std::sqrt(v[off + i] / bc2) + eps);
                }
            };
            std::size_t off = 0;
            update(p.w1, off); off += p.w1.size();
            update(p.b1, off); off += p.b1.size();
            update(p.w2, off); off += p.w2.size();
            update(p.b2, off);
        }
    }
    if (final_loss) *final_loss = last_loss;
    return p;
}

// Feature-blind baseline: emits conflict with probability p from a seeded
// stream, deterministic per (seed, call index).
class RandomPredictor {
public:
    RandomPredictor(std::uint64_t seed, double p_conflict)
        : rng_(derive_seed(seed, "random-predictor")), p_(p_conflict) {
        if (p_conflict < 0.0 || p_conflict > 1.0)
            throw ConfigError("p_conflict must be in [0, 1]");
    }

    bool next() { return rng_.uniform() < p_; }

private:
    Rng rng_;
    double p_;
};

inline PredictorReport evaluate_predictor(const MlpParams& params,
                                          const std::vector<FeatureVec>& features,
                                          const std::vector<bool>& labels,
                                          double threshold = 0.5) {
    if (features.empty() || features.size() != labels.size())
        throw InputError("evaluation set empty or size mismatch");
    PredictorReport r;
    for (std::size_t i = 0; i < features.size(); ++i) {
        const bool pred = predict(params, features[i], threshold).label;
        if (pred && labels[i]) ++r.tp;
        else if (pred && !labels[i]) ++r.fp;
        else if (!pred && labels[i]) ++r.fn;
        else ++r.tn;
    }
    const double n = static_cast<double>(features.size());
    r.accuracy = (r.tp + r.tn) / n;
    r.precision = (r.tp + r.fp) > 0 ? static_cast<double>(r.tp) / (r.tp + r.fp) : 0.0;
    r.recall = (r.tp + r.fn) > 0 ? static_cast<double>(r.tp) / (r.tp + r.fn) : 0.0;
    r.f1 = (r.precision + r.recall) > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
                                          : 0.0;
    return r;
}

}  // namespace dcrd
