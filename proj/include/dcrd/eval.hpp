#pragma once

#include <cctype>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcrd/common.hpp"
#include "dcrd/decoding.hpp"
#include "dcrd/forge.hpp"
#include "dcrd/predictor.hpp"

namespace dcrd {

// Normalized containment match: lowercase, punctuation stripped (underscores
// kept, entity surfaces use them), whitespace collapsed, leading articles
// dropped; gold must appear as a substring of the generation.
inline std::string normalize_answer(const std::string& text) {
    std::string s;
    s.reserve(text.size());
    for (char c : text) {
        const unsigned char u = static_cast<unsigned char>(c);
        if (std::isalnum(u) || c == '_')
            s.push_back(static_cast<char>(std::tolower(u)));
        else
            s.push_back(' ');
    }
    std::istringstream iss(s);
    std::string word, out;
    bool first = true;
    while (iss >> word) {
        if (first && (word == "a" || word == "an" || word == "the")) {
            continue;
        }
        first = false;
        if (!out.empty()) out += ' ';
        out += word;
    }
    return out;
}

// Containment on whole-word boundaries, so an entity surface never matches a
// longer surface that merely shares its prefix.
inline bool match_answer(const std::string& generated, const std::string& gold) {
    const std::string g = " " + normalize_answer(generated) + " ";
    const std::string a = normalize_answer(gold);
    if (a.empty()) return false;
    return g.find(" " + a + " ") != std::string::npos;
}

struct InstanceRecord {
    std::string id;
    bool conflict = false;
    bool correct = false;
    bool predicted_conflict = false;
    bool has_prediction = false;
    bool failed = false;
    std::string answer_text;
    double seconds = 0.0;
};

struct EvalReport {
    std::string strategy;
    int n = 0;
    int n_conflict = 0;
    int n_nonconflict = 0;
    int correct_total = 0;
    int correct_conflict = 0;
    int correct_nonconflict = 0;
    int failures = 0;
    // routing confusion: predicted x actual
    int conf_pred_t_act_t = 0;
    int conf_pred_t_act_f = 0;
    int conf_pred_f_act_t = 0;
    int conf_pred_f_act_f = 0;
    double mean_seconds = 0.0;
    std::vector<InstanceRecord> records;

    double overall_acc() const { return n > 0 ? static_cast<double>(correct_total) / n : 0.0; }
    double conflict_acc() const {
        return n_conflict > 0 ? static_cast<double>(correct_conflict) / n_conflict : 0.0;
    }
    double nonconflict_acc() const {
        return n_nonconflict > 0 ? static_cast<double>(correct_nonconflict) / n_nonconflict : 0.0;
    }
};

inline DecodeResult decode_instance(const ModelParams& params, const Vocab& vocab,
                                    const QAInstance& inst, Strategy strategy,
                                    const DecodeConfig& config, const PredictFn& predictor) {
    PromptParts prompt = build_prompt(vocab, inst.context, inst.question);
    switch (strategy) {
        case Strategy::Greedy: return decode_greedy(params, prompt, config);
        case Strategy::Cad: return decode_cad(params, prompt, config);
        case Strategy::Adacad: return decode_adacad(params, prompt, config);
        case Strategy::Dcd: return decode_dcd(params, prompt, config);
        case Strategy::DcrdRouted: return route_and_decode(params, prompt, predictor, config);
    }
    throw ConfigError("unknown strategy");
}

inline EvalReport evaluate(const std::vector<QAInstance>& dataset, Strategy strategy,
                           const ModelParams& params, const Vocab& vocab,
                           const DecodeConfig& config, const PredictFn& predictor = nullptr) {
    if (strategy == Strategy::DcrdRouted && !predictor)
        throw InputError("dcrd-routed evaluation requires a predictor");
    EvalReport report;
    report.strategy = strategy_name(strategy);
    double time_sum = 0.0;
    DecodeConfig cfg = config;
    cfg.record_trace = false;
    for (const QAInstance& inst : dataset) {
        InstanceRecord rec;
        rec.id = inst.id;
        rec.conflict = inst.conflict;
        try {
            DecodeResult r = decode_instance(params, vocab, inst, strategy, cfg, predictor);
            rec.answer_text = vocab.detokenize(r.answer);
            rec.correct = match_answer(rec.answer_text, inst.answer);
            rec.seconds = r.seconds;
            time_sum += r.seconds;
            if (r.conflict_prediction) {
                rec.has_prediction = true;
                rec.predicted_conflict = r.conflict_prediction->label;
                if (rec.predicted_conflict && inst.conflict) ++report.conf_pred_t_act_t;
                else if (rec.predicted_conflict && !inst.conflict) ++report.conf_pred_t_act_f;
                else if (!rec.predicted_conflict && inst.conflict) ++report.conf_pred_f_act_t;
                else ++report.conf_pred_f_act_f;
            }
        } catch (const std::exception&) {
            rec.failed = true;
            ++report.failures;
        }
        ++report.n;
        if (inst.conflict) ++report.n_conflict; else ++report.n_nonconflict;
        if (rec.correct) {
            ++report.correct_total;
            if (inst.conflict) ++report.correct_conflict; else ++report.correct_nonconflict;
        }
        report.records.push_back(std::move(rec));
    }
    report.mean_seconds = report.n > 0 ? time_sum / report.n : 0.0;
    return report;
}

inline nlohmann::json report_to_json(const EvalReport& r) {
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& rec : r.records) {
        nlohmann::json j = {{"id", rec.id},
                            {"conflict", rec.conflict},
                            {"correct", rec.correct},
                            {"failed", rec.failed},
                            {"answer", rec.answer_text}};
        if (rec.has_prediction) j["predicted_conflict"] = rec.predicted_conflict;
        recs.push_back(std::move(j));
    }
    return {{"strategy", r.strategy},
            {"n", r.n},
            {"overall_accuracy", r.overall_acc()},
            {"conflict_accuracy", r.conflict_acc()},
            {"nonconflict_accuracy", r.nonconflict_acc()},
            {"n_conflict", r.n_conflict},
            {"n_nonconflict", r.n_nonconflict},
            {"failures", r.failures},
            {"routing_confusion",
             {{"pred_conflict_actual_conflict", r.conf_pred_t_act_t},
              {"pred_conflict_actual_nonconflict", r.conf_pred_t_act_f},
              {"pred_nonconflict_actual_conflict", r.conf_pred_f_act_t},
              {"pred_nonconflict_actual_nonconflict", r.conf_pred_f_act_f}}},
            {"mean_seconds", r.mean_seconds},
            {"records", recs}};
}

struct SweepPoint {
    std::string axis;
    double value = 0.0;
    std::string strategy;
    double accuracy = 0.0;
    double conflict_acc = 0.0;
    double nonconflict_acc = 0.0;
};

struct SweepResult {
    std::string axis;
    std::vector<double> values;
    std::vector<SweepPoint> points;

    std::string to_csv() const {
        std::ostringstream os;
        os << "axis,value,strategy,accuracy,conflict_acc,nonconflict_acc\n";
        for (const auto& p : points)
            os << p.axis << ',' << p.value << ',' << p.strategy << ',' << p.accuracy << ','
               << p.conflict_acc << ',' << p.nonconflict_acc << '\n';
        return os.str();
    }
};

struct SweepDataset {
    std::vector<QAInstance> instances;
};

// Re-evaluates each strategy per axis value. For conflict_ratio and
// noise_ratio the forge regenerates datasets under derived sub-seeds; alpha
// and lambda reuse the given dataset with the parameter overridden.
inline SweepResult sweep(const KnowledgeBase& kb, const std::vector<QAInstance>& base_dataset,
                         const std::string& axis, const std::vector<double>& values,
                         const std::vector<Strategy>& strategies, const ModelParams& params,
                         const DecodeConfig& config, const PredictFn& predictor,
                         int sweep_instances, int n_distractors, std::uint64_t seed) {
    if (axis != "conflict_ratio" && axis != "alpha" && axis != "lambda" && axis != "noise_ratio")
        throw ConfigError("unknown sweep axis: " + axis);
    SweepResult result;
    result.axis = axis;
    result.values = values;
    for (double v : values) {
        std::vector<QAInstance> dataset = base_dataset;
        DecodeConfig cfg = config;
        if (axis == "conflict_ratio") {
            if (v < 0.0 || v > 1.0) throw ConfigError("conflict_ratio value out of range");
            dataset = synthesize_dataset(kb, sweep_instances, v, n_distractors,
                                         derive_seed(seed, "sweep-ratio-" + std::to_string(v)));
        } else if (axis == "noise_ratio") {
            if (v < 0.0 || v > 1.0) throw ConfigError("noise_ratio value out of range");
            dataset = inject_noise(base_dataset, v, kb,
                                   derive_seed(seed, "sweep-noise-" + std::to_string(v)));
        } else if (axis == "alpha") {
            if (v < 0.0) throw ConfigError("alpha value out of range");
            cfg.alpha = v;
        } else {
            if (v < 0.0) throw ConfigError("lambda value out of range");
            cfg.lambda = v;
        }
        for (Strategy s : strategies) {
            EvalReport r = evaluate(dataset, s, params, kb.vocab(), cfg, predictor);
            result.points.push_back(SweepPoint{axis, v, strategy_name(s), r.overall_acc(),
                                               r.conflict_acc(), r.nonconflict_acc()});
        }
    }
    return result;
}

struct TimingEntry {
    std::string strategy;
    double mean_seconds = 0.0;
};

// Wall-clock mean per instance, single-threaded, first warmup instances
// excluded from the mean.
inline std::vector<TimingEntry> timing_report(const std::vector<QAInstance>& sample,
                                              const std::vector<Strategy>& strategies,
                                              const ModelParams& params, const Vocab& vocab,
                                              const DecodeConfig& config,
                                              const PredictFn& predictor, int warmup = 3) {
    if (sample.empty() && !strategies.empty()) throw InputError("timing sample is empty");
    std::vector<TimingEntry> out;
    DecodeConfig cfg = config;
    cfg.record_trace = false;
    for (Strategy s : strategies) {
        double sum = 0.0;
        int counted = 0;
        for (int i = 0; i < static_cast<int>(sample.size()); ++i) {
            DecodeResult r = decode_instance(params, vocab, sample[static_cast<std::size_t>(i)], s,
                                             cfg, predictor);
            if (i >= warmup || static_cast<int>(sample.size()) <= warmup) {
                sum += r.seconds;
                ++counted;
            }
        }
        out.push_back(TimingEntry{strategy_name(s), counted > 0 ? sum / counted : 0.0});
    }
    return out;
}

}  // namespace dcrd
