#pragma once

#include <cstddef>
#include <vector>

#include "dcrd/common.hpp"
#include "dcrd/model.hpp"

namespace dcrd {

struct Span {
    int begin = 0;
    int end = 0;  // half-open

    int length() const { return end - begin; }
    bool empty() const { return end <= begin; }
    bool contains(int i) const { return i >= begin && i < end; }
};

// Token-index spans of an assembled prompt plus its generated suffix.
// Ordering context < question < output; template tokens fill the gaps.
struct SpanLayout {
    Span context;
    Span question;
    Span output;

    void validate(int seq_len) const {
        auto check = [&](const Span& s, const char* name) {
            if (s.begin < 0 || s.end > seq_len || s.begin > s.end)
                throw InputError(std::string(name) + " span out of bounds");
        };
        check(context, "context");
        check(question, "question");
        check(output, "output");
        if (!context.empty() && !question.empty() && context.end > question.begin)
            throw InputError("context span must precede question span");
        if (!question.empty() && !output.empty() && question.end > output.begin)
            throw InputError("question span must precede output span");
    }
};

// Span-averaged attention mass per (layer, head): alpha_c over context keys,
// alpha_o over output keys, each normalized by the full span length and
// averaged over all output-span query rows.
struct SpanAttentionSummary {
    int n_layers = 0;
    int n_heads = 0;
    std::vector<float> alpha_c;  // [L x H]
    std::vector<float> alpha_o;

    float ac(int l, int h) const { return alpha_c[static_cast<std::size_t>(l) * n_heads + h]; }
    float ao(int l, int h) const { return alpha_o[static_cast<std::size_t>(l) * n_heads + h]; }
};

struct FidelityMatrix {
    int n_layers = 0;
    int n_heads = 0;
    std::vector<float> values;   // [L x H]
    int degenerate_count = 0;    // entries with zero mass on both spans

    float at(int l, int h) const { return values[static_cast<std::size_t>(l) * n_heads + h]; }
};

inline SpanAttentionSummary span_attention_summary(const AttentionTensor& attn,
                                                   const SpanLayout& layout) {
    layout.validate(attn.seq_len);
    if (layout.output.empty()) throw InputError("output span is empty");
    const int L = layout.context.length();
    const int T = layout.output.length();
    SpanAttentionSummary s;
    s.n_layers = attn.n_layers;
    s.n_heads = attn.n_heads;
    s.alpha_c.assign(static_cast<std::size_t>(attn.n_layers) * attn.n_heads, 0.0f);
    s.alpha_o.assign(s.alpha_c.size(), 0.0f);
    const float inv_rows = 1.0f / static_cast<float>(T);
    for (int l = 0; l < attn.n_layers; ++l)
        for (int h = 0; h < attn.n_heads; ++h) {
            float sum_c = 0.0f, sum_o = 0.0f;
            for (int q = layout.output.begin; q < layout.output.end; ++q) {
                for (int k = layout.context.begin; k < layout.context.end; ++k)
                    sum_c += attn.at(l, h, q, k);
                for (int k = layout.output.begin; k < layout.output.end; ++k)
                    sum_o += attn.at(l, h, q, k);
            }
            const std::size_t idx = static_cast<std::size_t>(l) * attn.n_heads + h;
            s.alpha_c[idx] = L > 0 ? sum_c / static_cast<float>(L) * inv_rows : 0.0f;
            s.alpha_o[idx] = sum_o / static_cast<float>(T) * inv_rows;
        }
    return s;
}

// Same computation fed from a live decoder session's captured rows; avoids
// materializing the full seq x seq tensor every step.
inline SpanAttentionSummary span_attention_summary(const DecoderSession& sess,
                                                   const SpanLayout& layout) {
    layout.validate(sess.length());
    if (layout.output.empty()) throw InputError("output span is empty");
    const ModelConfig& cfg = sess.config();
    const int L = layout.context.length();
    const int T = layout.output.length();
    SpanAttentionSummary s;
    s.n_layers = cfg.n_layers;
    s.n_heads = cfg.n_heads;
    s.alpha_c.assign(static_cast<std::size_t>(cfg.n_layers) * cfg.n_heads, 0.0f);
    s.alpha_o.assign(s.alpha_c.size(), 0.0f);
    const float inv_rows = 1.0f / static_cast<float>(T);
    for (int l = 0; l < cfg.n_layers; ++l)
        for (int h = 0; h < cfg.n_heads; ++h) {
            float sum_c = 0.0f, sum_o = 0.0f;
            for (int q = layout.output.begin; q < layout.output.end; ++q) {
                const auto& row = sess.attention_row(l, h, q);
                const int visible = static_cast<int>(row.size());
                for (int k = layout.context.begin; k < layout.context.end && k < visible; ++k)
                    sum_c += row[static_cast<std::size_t>(k)];
                for (int k = layout.output.begin; k < layout.output.end && k < visible; ++k)
                    sum_o += row[static_cast<std::size_t>(k)];
            }
            const std::size_t idx = static_cast<std::size_t>(l) * cfg.n_heads + h;
            s.alpha_c[idx] = L > 0 ? sum_c / static_cast<float>(L) * inv_rows : 0.0f;
            s.alpha_o[idx] = sum_o / static_cast<float>(T) * inv_rows;
        }
    return s;
}

// S_{l,h} = alpha_o / (alpha_c + alpha_o); zero-mass entries get the neutral
// value 0.5 and are counted as degenerate.
inline FidelityMatrix fidelity_matrix(const SpanAttentionSummary& summary) {
    FidelityMatrix m;
    m.n_layers = summary.n_layers;
    m.n_heads = summary.n_heads;
    m.values.resize(summary.alpha_c.size());
    for (std::size_t i = 0; i < m.values.size(); ++i) {
        const float denom = summary.alpha_c[i] + summary.alpha_o[i];
        if (denom > 0.0f) {
            m.values[i] = summary.alpha_o[i] / denom;
        } else {
            m.values[i] = 0.5f;
            ++m.degenerate_count;
        }
    }
    return m;
}

inline double fidelity_scalar(const FidelityMatrix& matrix) {
    if (matrix.values.empty()) throw InputError("empty fidelity matrix");
    double sum = 0.0;
    for (float v : matrix.values) sum += v;
    return sum / static_cast<double>(matrix.values.size());
}

// Row-major (layer-major, then head) flattening.
inline std::vector<float> flatten_features(const FidelityMatrix& matrix) {
    if (matrix.values.empty()) throw InputError("empty fidelity matrix");
    return matrix.values;
}

// Mean hidden vector of one layer over the output span; classifier-ablation
// feature only.
inline std::vector<float> hidden_state_features(const ForwardOutput& output,
                                                const SpanLayout& layout, int layer_index) {
    if (layer_index < 0 || layer_index >= static_cast<int>(output.hidden_states.size()))
        throw InputError("hidden-state layer index out of range");
    layout.validate(output.seq_len);
    if (layout.output.empty()) throw InputError("output span is empty");
    const auto& hl = output.hidden_states[static_cast<std::size_t>(layer_index)];
    const int d = static_cast<int>(hl.size() / static_cast<std::size_t>(output.seq_len));
    std::vector<float> mean(static_cast<std::size_t>(d), 0.0f);
    for (int p = layout.output.begin; p < layout.output.end; ++p)
        for (int i = 0; i < d; ++i)
            mean[static_cast<std::size_t>(i)] += hl[static_cast<std::size_t>(p) * d + i];
    const float inv = 1.0f / static_cast<float>(layout.output.length());
    for (float& v : mean) v *= inv;
    return mean;
}

}  // namespace dcrd
