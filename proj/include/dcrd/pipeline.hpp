#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcrd/common.hpp"
#include "dcrd/decoding.hpp"
#include "dcrd/eval.hpp"
#include "dcrd/forge.hpp"
#include "dcrd/model.hpp"
#include "dcrd/predictor.hpp"
#include "dcrd/serialize.hpp"
#include "dcrd/train.hpp"
#include "dcrd/vocab.hpp"

namespace dcrd {

inline nlohmann::json default_run_config() {
    return {
        {"model",
         {{"vocab_size", 512},
          {"d_model", 64},
          {"n_layers", 4},
          {"n_heads", 4},
          {"d_ff", 256},
          {"max_seq", 128},
          {"train", {{"steps", 2500}, {"batch", 16}, {"learning_rate", 2e-3}}}}},
        {"forge",
         {{"n_types", 4},
          {"entities_per_type", 32},
          {"n_relations", 8},
          {"n_facts", 96},
          {"n_instances", 500},
          {"conflict_ratio", 0.5},
          {"n_distractors", 1},
          {"noise_ratio", 0.0},
          {"corpus",
           {{"fact_repeats", 2},
            {"memory_qa_repeats", 1},
            {"context_qa_repeats", 2},
            {"copy_qa_repeats", 20},
            {"conflict_qa_repeats", 1}}}}},
        {"predictor",
         {{"epochs", 150},
          {"batch", 16},
          {"learning_rate", 1e-2},
          {"hidden_dim", 16},
          {"threshold", 0.25},
          {"holdout_fraction", 0.2}}},
        {"decode",
         {{"alpha", 3.75}, {"lambda", 10.0}, {"max_new", 32}, {"strategy", "dcrd-routed"}, {"draft_len", -1}}},
        {"eval",
         {{"strategies", {"greedy", "cad", "adacad", "dcd", "dcrd-routed"}},
          {"sweep_instances", 300}}},
        {"seeds", {{"master", 17}}},
        {"paths", {{"artifacts", "artifacts"}}}};
}

namespace detail {

inline void check_known_keys(const nlohmann::json& user, const nlohmann::json& defaults,
                             const std::string& path) {
    if (!user.is_object()) return;
    for (auto it = user.begin(); it != user.end(); ++it) {
        const std::string where = path.empty() ? it.key() : path + "." + it.key();
        if (!defaults.contains(it.key())) throw ConfigError("unknown config key: " + where);
        if (it.value().is_object()) check_known_keys(it.value(), defaults.at(it.key()), where);
    }
}

inline void deep_merge(nlohmann::json& base, const nlohmann::json& user) {
    for (auto it = user.begin(); it != user.end(); ++it) {
        if (it.value().is_object() && base.contains(it.key()) && base.at(it.key()).is_object())
            deep_merge(base.at(it.key()), it.value());
        else
            base[it.key()] = it.value();
    }
}

}  // namespace detail

struct RunConfig {
    nlohmann::json json;

    static RunConfig from_json(const nlohmann::json& user) {
        nlohmann::json merged = default_run_config();
        detail::check_known_keys(user, merged, "");
        detail::deep_merge(merged, user);
        RunConfig rc{merged};
        rc.validate();
        return rc;
    }

    static RunConfig from_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw ConfigError("cannot open config file: " + path);
        nlohmann::json user = nlohmann::json::parse(is, nullptr, false);
        if (user.is_discarded()) throw ConfigError("config file is not valid JSON: " + path);
        return from_json(user);
    }

    std::uint64_t master_seed() const { return json.at("seeds").at("master").get<std::uint64_t>(); }
    std::string artifacts_dir() const { return json.at("paths").at("artifacts").get<std::string>(); }

    ModelConfig model_config() const {
        const auto& m = json.at("model");
        ModelConfig cfg;
        cfg.vocab_size = m.at("vocab_size").get<int>();
        cfg.d_model = m.at("d_model").get<int>();
        cfg.n_layers = m.at("n_layers").get<int>();
        cfg.n_heads = m.at("n_heads").get<int>();
        cfg.d_ff = m.at("d_ff").get<int>();
        cfg.max_seq = m.at("max_seq").get<int>();
        cfg.seed = derive_seed(master_seed(), "model");
        return cfg;
    }

    TrainConfig train_config() const {
        const auto& t = json.at("model").at("train");
        TrainConfig cfg;
        cfg.steps = t.at("steps").get<int>();
        cfg.batch = t.at("batch").get<int>();
        cfg.learning_rate = t.at("learning_rate").get<float>();
        cfg.seed = derive_seed(master_seed(), "train");
        return cfg;
    }

    KbSpec kb_spec() const {
        const auto& f = json.at("forge");
        KbSpec spec;
        spec.n_types = f.at("n_types").get<int>();
        spec.entities_per_type = f.at("entities_per_type").get<int>();
        spec.n_relations = f.at("n_relations").get<int>();
        spec.n_facts = f.at("n_facts").get<int>();
        spec.seed = derive_seed(master_seed(), "kb");
        return spec;
    }

    CorpusOptions corpus_options() const {
        const auto& c = json.at("forge").at("corpus");
        CorpusOptions opts;
        opts.fact_repeats = c.at("fact_repeats").get<int>();
        opts.memory_qa_repeats = c.at("memory_qa_repeats").get<int>();
        opts.context_qa_repeats = c.at("context_qa_repeats").get<int>();
        opts.copy_qa_repeats = c.at("copy_qa_repeats").get<int>();
        opts.conflict_qa_repeats = c.at("conflict_qa_repeats").get<int>();
        opts.n_distractors = json.at("forge").at("n_distractors").get<int>();
        opts.seed = derive_seed(master_seed(), "corpus");
        return opts;
    }

    PredictorTrainConfig predictor_config() const {
        const auto& p = json.at("predictor");
        PredictorTrainConfig cfg;
        cfg.epochs = p.at("epochs").get<int>();
        cfg.batch = p.at("batch").get<int>();
        cfg.learning_rate = p.at("learning_rate").get<float>();
        cfg.hidden_dim = p.at("hidden_dim").get<int>();
        cfg.seed = derive_seed(master_seed(), "predictor");
        return cfg;
    }

    DecodeConfig decode_config() const {
        const auto& d = json.at("decode");
        DecodeConfig cfg;
        cfg.alpha = d.at("alpha").get<double>();
        cfg.lambda = d.at("lambda").get<double>();
        cfg.max_new = d.at("max_new").get<int>();
        cfg.strategy = strategy_from_string(d.at("strategy").get<std::string>());
        cfg.draft_len = d.at("draft_len").get<int>();
        return cfg;
    }

    void validate() const {
        model_config().validate();
        kb_spec().validate();
        decode_config().validate();
        const auto& f = json.at("forge");
        const double ratio = f.at("conflict_ratio").get<double>();
        if (ratio < 0.0 || ratio > 1.0) throw ConfigError("forge.conflict_ratio out of [0, 1]");
        const double noise = f.at("noise_ratio").get<double>();
        if (noise < 0.0 || noise > 1.0) throw ConfigError("forge.noise_ratio out of [0, 1]");
        if (f.at("n_instances").get<int>() < 1) throw ConfigError("forge.n_instances must be >= 1");
        const double thr = json.at("predictor").at("threshold").get<double>();
        if (thr < 0.0 || thr > 1.0) throw ConfigError("predictor.threshold out of [0, 1]");
        const double ho = json.at("predictor").at("holdout_fraction").get<double>();
        if (ho < 0.0 || ho >= 1.0) throw ConfigError("predictor.holdout_fraction out of [0, 1)");
        if (kb_spec().n_facts < 1) throw ConfigError("forge.n_facts must be >= 1");
    }

    std::uint64_t config_hash() const { return fnv1a64(json.dump()); }
};

struct ForgeOutput {
    std::vector<QAInstance> dataset;
    std::vector<std::string> corpus;
    ForgeStats stats;
};

inline ForgeOutput run_forge(const RunConfig& rc, const KnowledgeBase& kb) {
    ForgeOutput out;
    const auto& f = rc.json.at("forge");
    out.dataset = synthesize_dataset(kb, f.at("n_instances").get<int>(),
                                     f.at("conflict_ratio").get<double>(),
                                     f.at("n_distractors").get<int>(),
                                     derive_seed(rc.master_seed(), "dataset"), &out.stats);
    const double noise = f.at("noise_ratio").get<double>();
    if (noise > 0.0)
        out.dataset = inject_noise(std::move(out.dataset), noise, kb,
                                   derive_seed(rc.master_seed(), "noise"));
    out.corpus = build_memory_corpus(kb, rc.corpus_options());
    return out;
}

inline std::vector<TokenSeq> tokenize_corpus(const Vocab& vocab,
                                             const std::vector<std::string>& lines) {
    std::vector<TokenSeq> out;
    out.reserve(lines.size());
    for (const auto& line : lines) out.push_back(vocab.tokenize(line));
    return out;
}

inline void write_corpus(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError("cannot open corpus file for writing: " + path);
    for (const auto& line : lines) os << line << '\n';
}

struct PredictorDataset {
    std::vector<FeatureVec> features;
    std::vector<bool> labels;
    std::vector<std::string> ids;
};

// Draft-generates every instance and pairs its fidelity features with the
// forge's conflict label.
inline PredictorDataset collect_predictor_data(const std::vector<QAInstance>& dataset,
                                               const ModelParams& params, const Vocab& vocab,
                                               int draft_len) {
    PredictorDataset out;
    for (const QAInstance& inst : dataset) {
        PromptParts prompt = build_prompt(vocab, inst.context, inst.question);
        DraftOutcome draft = run_draft(params, prompt, draft_len);
        if (draft.features.empty()) continue;  // no output span to measure
        out.features.push_back(std::move(draft.features));
        out.labels.push_back(inst.conflict);
        out.ids.push_back(inst.id);
    }
    return out;
}

inline void write_predictor_dataset(const std::string& path, const PredictorDataset& data) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError("cannot open predictor dataset for writing: " + path);
    for (std::size_t i = 0; i < data.features.size(); ++i) {
        nlohmann::json j = {{"features", data.features[i]},
                            {"label", static_cast<bool>(data.labels[i])},
                            {"instance_id", data.ids[i]}};
        os << j.dump() << '\n';
    }
}

inline PredictorDataset read_predictor_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("cannot open predictor dataset: " + path);
    PredictorDataset out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        out.features.push_back(j.at("features").get<FeatureVec>());
        out.labels.push_back(j.at("label").get<bool>());
        out.ids.push_back(j.at("instance_id").get<std::string>());
    }
    return out;
}

// Seeded 80/20-style split; returns indices (train, holdout).
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_split(
    std::size_t n, double holdout_fraction, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(derive_seed(seed, "holdout-split"));
    rng.shuffle(idx);
    const std::size_t n_hold = static_cast<std::size_t>(std::llround(n * holdout_fraction));
    std::vector<std::size_t> hold(idx.begin(), idx.begin() + n_hold);
    std::vector<std::size_t> tr(idx.begin() + n_hold, idx.end());
    return {tr, hold};
}

inline nlohmann::json mlp_config_json(const MlpParams& p, double threshold) {
    return {{"kind", "conflict-predictor"},
            {"input_dim", p.input_dim},
            {"hidden_dim", p.hidden_dim},
            {"seed", p.seed},
            {"threshold", threshold}};
}

inline std::vector<TensorSpec> mlp_layout(const MlpParams& p) {
    std::vector<TensorSpec> layout;
    std::size_t off = 0;
    auto add = [&](const char* name, std::vector<std::size_t> shape) {
        TensorSpec t{name, std::move(shape), off};
        off += t.numel();
        layout.push_back(std::move(t));
    };
    add("w1", {static_cast<std::size_t>(p.input_dim), static_cast<std::size_t>(p.hidden_dim)});
    add("b1", {static_cast<std::size_t>(p.hidden_dim)});
    const std::size_t in2 = static_cast<std::size_t>(p.hidden_dim > 0 ? p.hidden_dim : p.input_dim);
    add("w2", {in2, 2});
    add("b2", {2});
    return layout;
}

inline void save_predictor(const std::string& path, const MlpParams& p, double threshold) {
    std::vector<float> flat;
    flat.reserve(p.size());
    flat.insert(flat.end(), p.w1.begin(), p.w1.end());
    flat.insert(flat.end(), p.b1.begin(), p.b1.end());
    flat.insert(flat.end(), p.w2.begin(), p.w2.end());
    flat.insert(flat.end(), p.b2.begin(), p.b2.end());
    save_checkpoint(path, mlp_config_json(p, threshold), mlp_layout(p), flat);
}

struct LoadedPredictor {
    MlpParams params;
    double threshold = 0.5;
};

inline LoadedPredictor load_predictor(const std::string& path) {
    LoadedCheckpoint ck = load_checkpoint(path);
    LoadedPredictor out;
    out.params.input_dim = ck.config.at("input_dim").get<int>();
    out.params.hidden_dim = ck.config.at("hidden_dim").get<int>();
    out.params.seed = ck.config.at("seed").get<std::uint64_t>();
    out.threshold = ck.config.at("threshold").get<double>();
    const auto& p = out.params;
    std::size_t off = 0;
    auto take = [&](std::size_t count) {
        std::vector<float> v(ck.data.begin() + static_cast<std::ptrdiff_t>(off),
                             ck.data.begin() + static_cast<std::ptrdiff_t>(off + count));
        off += count;
        return v;
    };
    out.params.w1 = take(static_cast<std::size_t>(p.input_dim) * p.hidden_dim);
    out.params.b1 = take(static_cast<std::size_t>(p.hidden_dim));
    out.params.w2 = take(static_cast<std::size_t>(p.hidden_dim > 0 ? p.hidden_dim : p.input_dim) * 2);
    out.params.b2 = take(2);
    return out;
}

inline PredictFn make_mlp_predict_fn(const MlpParams& params, double threshold) {
    return [params, threshold](const FeatureVec& features) {
        const ConflictPrediction p = predict(params, features, threshold);
        return RoutePrediction{p.prob_conflict, p.label};
    };
}

}  // namespace dcrd
