#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcrd/common.hpp"
#include "dcrd/vocab.hpp"

namespace dcrd {

struct KbSpec {
    int n_types = 4;
    int entities_per_type = 32;
    int n_relations = 8;
    int n_facts = 200;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_types < 1 || n_relations < 1 || n_facts < 1)
            throw ConfigError("kb counts must be >= 1");
        if (entities_per_type < 2)
            throw ConfigError("entities_per_type must be >= 2 (conflict injection needs a swap)");
        // one triple per unique (subject, relation) pair
        if (static_cast<long long>(n_facts) >
            static_cast<long long>(n_relations) * entities_per_type)
            throw ConfigError("n_facts exceeds the unique (subject, relation) capacity");
    }
};

struct Triple {
    int subject = 0;   // global entity id
    int relation = 0;  // relation id
    int object = 0;    // global entity id
    int object_type = 0;

    bool operator==(const Triple& o) const {
        return subject == o.subject && relation == o.relation && object == o.object;
    }
};

struct RelationSchema {
    int subject_type = 0;
    int object_type = 0;
};

// Typed synthetic knowledge base: entity pools per type, a relation schema,
// a triple store with unique (subject, relation) pairs, and a surface-form
// lexicon that doubles as the model vocabulary.
class KnowledgeBase {
public:
    explicit KnowledgeBase(const KbSpec& spec) : spec_(spec) {
        spec.validate();
        Rng rng(derive_seed(spec.seed, "kb-build"));

        vocab_.add("\n");
        for (const auto& w : template_words()) vocab_.add(w);
        for (const char* w : {"what", "is", "of", "?", "has", "."}) vocab_.add(w);
        relations_.resize(static_cast<std::size_t>(spec.n_relations));
        for (int r = 0; r < spec.n_relations; ++r) {
            relations_[static_cast<std::size_t>(r)].subject_type =
                static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(spec.n_types)));
            relations_[static_cast<std::size_t>(r)].object_type =
                static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(spec.n_types)));
            vocab_.add(relation_phrase(r));
        }
        for (int e = 0; e < spec.n_types * spec.entities_per_type; ++e)
            vocab_.add(entity_surface(e));

        std::set<std::pair<int, int>> used;  // unique (subject, relation)
        int guard = 0;
        while (static_cast<int>(triples_.size()) < spec.n_facts) {
            if (++guard > spec.n_facts * 200)
                throw ConfigError("kb spec cannot host n_facts unique (subject, relation) pairs");
            const int r = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(spec.n_relations)));
            const RelationSchema& sch = relations_[static_cast<std::size_t>(r)];
            const int s = entity_id(sch.subject_type,
                                    static_cast<int>(rng.uniform_index(
                                        static_cast<std::uint64_t>(spec.entities_per_type))));
            if (used.count({s, r})) continue;
            const int o = entity_id(sch.object_type,
                                    static_cast<int>(rng.uniform_index(
                                        static_cast<std::uint64_t>(spec.entities_per_type))));
            used.insert({s, r});
            triples_.push_back(Triple{s, r, o, sch.object_type});
        }
    }

    const KbSpec& spec() const { return spec_; }
    const Vocab& vocab() const { return vocab_; }
    const std::vector<Triple>& triples() const { return triples_; }
    const std::vector<RelationSchema>& relations() const { return relations_; }

    int entity_id(int type, int idx) const { return type * spec_.entities_per_type + idx; }
    int entity_type(int ent) const { return ent / spec_.entities_per_type; }

    std::string entity_surface(int ent) const {
        return "t" + std::to_string(entity_type(ent)) + "_e" +
               std::to_string(ent % spec_.entities_per_type);
    }

    std::string relation_phrase(int rel) const { return "rel" + std::to_string(rel); }

    std::string question_text(const Triple& t) const {
        return "what is " + relation_phrase(t.relation) + " of " + entity_surface(t.subject) + " ?";
    }

    // n_variants sentence templates per relation
    static constexpr int kSentenceVariants = 2;

    std::string render_sentence(const Triple& t, int variant) const {
        const std::string s = entity_surface(t.subject);
        const std::string r = relation_phrase(t.relation);
        const std::string o = entity_surface(t.object);
        if (variant % kSentenceVariants == 0) return s + " " + r + " " + o + " .";
        return s + " has " + r + " " + o + " .";
    }

    std::uint64_t checksum() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (const Triple& t : triples_) {
            h = (h ^ static_cast<std::uint64_t>(t.subject)) * 0x100000001b3ULL;
            h = (h ^ static_cast<std::uint64_t>(t.relation)) * 0x100000001b3ULL;
            h = (h ^ static_cast<std::uint64_t>(t.object)) * 0x100000001b3ULL;
        }
        return h;
    }

private:
    KbSpec spec_;
    Vocab vocab_;
    std::vector<RelationSchema> relations_;
    std::vector<Triple> triples_;
};

inline KnowledgeBase build_kb(const KbSpec& spec) { return KnowledgeBase(spec); }

struct Subgraph {
    std::vector<Triple> triples;
    int answer_index = 0;

    const Triple& answer() const { return triples[static_cast<std::size_t>(answer_index)]; }
};

// Answer triple plus distractors sharing its subject or object, topped up
// with random triples when the neighborhood is too small.
inline Subgraph extract_subgraph(const KnowledgeBase& kb, const Triple& seed_triple,
                                 int n_distractors, std::uint64_t seed) {
    const auto& all = kb.triples();
    if (std::find(all.begin(), all.end(), seed_triple) == all.end())
        throw InputError("seed triple not in knowledge base");
    Subgraph g;
    g.triples.push_back(seed_triple);
    g.answer_index = 0;
    Rng rng(derive_seed(seed, "subgraph"));
    std::vector<Triple> neighbors;
    for (const Triple& t : all) {
        if (t == seed_triple) continue;
        if (t.subject == seed_triple.subject || t.object == seed_triple.object ||
            t.subject == seed_triple.object || t.object == seed_triple.subject)
            neighbors.push_back(t);
    }
    // prefer neighbors whose object lives in a different type: distractors
    // should add context without competing in the answer's entity pool
    std::vector<Triple> preferred, rest;
    for (const Triple& t : neighbors)
        (t.object_type != seed_triple.object_type ? preferred : rest).push_back(t);
    rng.shuffle(preferred);
    rng.shuffle(rest);
    preferred.insert(preferred.end(), rest.begin(), rest.end());
    for (int i = 0; i < n_distractors && i < static_cast<int>(preferred.size()); ++i)
        g.triples.push_back(preferred[static_cast<std::size_t>(i)]);
    int guard = 0;
    while (static_cast<int>(g.triples.size()) < n_distractors + 1 && ++guard < 1000) {
        const Triple& t = all[static_cast<std::size_t>(rng.uniform_index(all.size()))];
        if (std::find(g.triples.begin(), g.triples.end(), t) == g.triples.end())
            g.triples.push_back(t);
    }
    return g;
}

// Replaces the answer triple's object with a distinct same-type entity.
inline Subgraph inject_conflict(const Subgraph& subgraph, const KnowledgeBase& kb,
                                std::uint64_t seed) {
    Subgraph g = subgraph;
    Triple& ans = g.triples[static_cast<std::size_t>(g.answer_index)];
    const int type = ans.object_type;
    const int pool = kb.spec().entities_per_type;
    if (pool < 2) throw GenerationError("no same-type alternative entity for conflict injection");
    Rng rng(derive_seed(seed, "conflict-swap"));
    int alt = ans.object;
    while (alt == ans.object)
        alt = kb.entity_id(type, static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(pool))));
    ans.object = alt;
    return g;
}

// Seeded template rendering; sentence order is a seeded permutation.
inline std::string render_context(const Subgraph& subgraph, const KnowledgeBase& kb,
                                  std::uint64_t seed) {
    if (subgraph.triples.empty()) throw InputError("empty subgraph");
    Rng rng(derive_seed(seed, "render"));
    std::vector<std::size_t> order(subgraph.triples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    std::string out;
    for (std::size_t i : order) {
        const int variant = static_cast<int>(rng.uniform_index(KnowledgeBase::kSentenceVariants));
        if (!out.empty()) out += ' ';
        out += kb.render_sentence(subgraph.triples[i], variant);
    }
    return out;
}

struct QAInstance {
    std::string id;
    std::string question;
    std::string context;
    std::string answer;
    bool conflict = false;
    bool noise = false;
    std::vector<Triple> source_triples;
    int perturbed_object = -1;  // entity id of o' when conflict, else -1
    int answer_object = -1;     // entity id the context entails
};

struct FilterResult {
    bool accept = true;
    std::vector<std::string> codes;
};

inline constexpr int kContextTokenBudget = 96;

// Structural stand-ins for the relevance / conflict-validity / response
// quality stages.
inline FilterResult quality_filter(const QAInstance& inst, const KnowledgeBase& kb) {
    FilterResult r;
    auto fail = [&](const char* code) {
        r.accept = false;
        r.codes.push_back(code);
    };
    if (inst.source_triples.empty()) {
        fail("missing-source");
        return r;
    }
    const Triple& ans = inst.source_triples.front();
    const std::string subj = kb.entity_surface(ans.subject);
    const std::string rel = kb.relation_phrase(ans.relation);
    auto contains_word = [](const std::string& text, const std::string& w) {
        std::size_t pos = 0;
        while ((pos = text.find(w, pos)) != std::string::npos) {
            const bool left = pos == 0 || text[pos - 1] == ' ' || text[pos - 1] == '\n';
            const std::size_t end = pos + w.size();
            const bool right = end == text.size() || text[end] == ' ' || text[end] == '\n';
            if (left && right) return true;
            pos = end;
        }
        return false;
    };
    if (!contains_word(inst.context, subj) || !contains_word(inst.context, rel))
        fail("relevance");
    if (inst.conflict) {
        if (inst.perturbed_object < 0) fail("conflict-validity");
        else if (inst.perturbed_object == ans.object) fail("conflict-validity");
        else if (kb.entity_type(inst.perturbed_object) != ans.object_type)
            fail("conflict-validity");
    }
    if (inst.context.empty()) fail("empty-context");
    if (static_cast<int>(kb.vocab().tokenize(inst.context).size()) > kContextTokenBudget)
        fail("length-budget");
    if (inst.context.find("I'm sorry") != std::string::npos) fail("refusal-marker");
    if (!contains_word(inst.context, inst.answer)) fail("answer-not-entailed");
    return r;
}

struct ForgeStats {
    int accepted = 0;
    int rejected = 0;
    int retries = 0;
};

inline constexpr int kRetryBudget = 20;

inline std::vector<QAInstance> synthesize_dataset(const KnowledgeBase& kb, int n_instances,
                                                  double conflict_ratio, int n_distractors,
                                                  std::uint64_t seed, ForgeStats* stats = nullptr) {
    if (n_instances < 1) throw InputError("n_instances must be >= 1");
    if (conflict_ratio < 0.0 || conflict_ratio > 1.0)
        throw InputError("conflict_ratio must be in [0, 1]");
    const int n_conflict = static_cast<int>(std::llround(n_instances * conflict_ratio));
    std::vector<bool> labels(static_cast<std::size_t>(n_instances), false);
    std::fill(labels.begin(), labels.begin() + n_conflict, true);
    Rng label_rng(derive_seed(seed, "conflict-slots"));
    label_rng.shuffle(labels);

    ForgeStats local;
    std::vector<QAInstance> out;
    out.reserve(static_cast<std::size_t>(n_instances));
    for (int i = 0; i < n_instances; ++i) {
        const std::uint64_t slot_seed = derive_seed(seed, "slot-" + std::to_string(i));
        QAInstance inst;
        bool ok = false;
        for (int attempt = 0; attempt < kRetryBudget; ++attempt) {
            const std::uint64_t try_seed = derive_seed(slot_seed, "try-" + std::to_string(attempt));
            Rng rng(derive_seed(try_seed, "pick"));
            const Triple& ans =
                kb.triples()[static_cast<std::size_t>(rng.uniform_index(kb.triples().size()))];
            Subgraph g = extract_subgraph(kb, ans, n_distractors, try_seed);
            inst = QAInstance{};
            inst.id = "inst-" + std::to_string(i);
            inst.conflict = labels[static_cast<std::size_t>(i)];
            inst.source_triples = g.triples;
            inst.question = kb.question_text(ans);
            Subgraph rendered = g;
            if (inst.conflict) {
                rendered = inject_conflict(g, kb, try_seed);
                inst.perturbed_object = rendered.answer().object;
            }
            inst.answer_object = rendered.answer().object;
            inst.answer = kb.entity_surface(inst.answer_object);
            inst.context = render_context(rendered, kb, try_seed);
            FilterResult fr = quality_filter(inst, kb);
            if (fr.accept) {
                ok = true;
                break;
            }
            ++local.rejected;
            ++local.retries;
        }
        if (!ok)
            throw GenerationError("retry budget exhausted at instance " + std::to_string(i));
        ++local.accepted;
        out.push_back(std::move(inst));
    }
    if (stats) *stats = local;
    return out;
}

// Flags an exact round(n * ratio) seeded subset and prepends or appends an
// unrelated rendered context; gold answers unchanged.
inline std::vector<QAInstance> inject_noise(std::vector<QAInstance> dataset, double noise_ratio,
                                            const KnowledgeBase& kb, std::uint64_t seed) {
    if (noise_ratio < 0.0 || noise_ratio > 1.0) throw InputError("noise_ratio must be in [0, 1]");
    const int n = static_cast<int>(dataset.size());
    const int n_noise = static_cast<int>(std::llround(n * noise_ratio));
    std::vector<std::size_t> idx(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(derive_seed(seed, "noise-slots"));
    rng.shuffle(idx);
    for (int i = 0; i < n_noise; ++i) {
        QAInstance& inst = dataset[idx[static_cast<std::size_t>(i)]];
        const std::uint64_t nseed = derive_seed(seed, "noise-" + std::to_string(i));
        Rng pick(derive_seed(nseed, "pick"));
        const Triple& ans_triple = inst.source_triples.front();
        const Triple* unrelated = nullptr;
        for (int attempt = 0; attempt < 100 && !unrelated; ++attempt) {
            const Triple& t =
                kb.triples()[static_cast<std::size_t>(pick.uniform_index(kb.triples().size()))];
            if (t.subject != ans_triple.subject) unrelated = &t;
        }
        if (!unrelated) continue;  // degenerate one-subject KB
        Subgraph g = extract_subgraph(kb, *unrelated, 1, nseed);
        const std::string noise_ctx = render_context(g, kb, nseed);
        if (pick.uniform() < 0.5)
            inst.context = noise_ctx + " " + inst.context;
        else
            inst.context = inst.context + " " + noise_ctx;
        inst.noise = true;
    }
    return dataset;
}

// Memory-corpus lines: plain fact sentences instill the parametric memory;
// QA-formatted lines (with and without a supporting context) teach the
// answer-slot format and context copying. Every line ends with <end>.
struct CorpusOptions {
    int fact_repeats = 2;
    int memory_qa_repeats = 2;
    int context_qa_repeats = 1;
    // copy-only QA asks about a pair absent from the kb, so the answer exists
    // only in the context; this is what teaches context copying at all
    int copy_qa_repeats = 1;
    // memory-priority QA pairs a known fact with a contradicting context and
    // keeps the memorized object as the target, the way pretraining text
    // carries misinformation; this is what makes conflicts detectable
    int conflict_qa_repeats = 1;
    // context-QA lines mirror the QA instances: answer fact plus distractors
    int n_distractors = 2;
    std::uint64_t seed = 0;
};

inline std::vector<std::string> build_memory_corpus(const KnowledgeBase& kb,
                                                    const CorpusOptions& opts = {}) {
    std::vector<std::string> lines;
    int index = 0;
    for (const Triple& t : kb.triples()) {
        // answers are the bare object surface so the contrastive step acts
        // exactly at the decision token instead of across template tokens
        const std::string ans = kb.entity_surface(t.object);
        for (int r = 0; r < opts.fact_repeats; ++r)
            lines.push_back(kb.render_sentence(t, r) + " " + Vocab::kEnd);
        const std::string q = kb.question_text(t);
        for (int r = 0; r < opts.memory_qa_repeats; ++r)
            lines.push_back(assemble_prompt_text("", q) + " " + ans + " " + Vocab::kEnd);
        for (int r = 0; r < opts.context_qa_repeats; ++r) {
            const std::uint64_t line_seed = derive_seed(
                opts.seed, "corpus-ctx-" + std::to_string(index) + "-" + std::to_string(r));
            const Subgraph g = extract_subgraph(kb, t, opts.n_distractors, line_seed);
            std::string ctx = render_context(g, kb, line_seed);
            if (r % 2 == 1) {
                // alternate repeats splice in an unrelated-subject block so
                // contexts carrying extraneous material stay in-distribution
                Rng mix(derive_seed(line_seed, "mix"));
                const Triple* unrelated = nullptr;
                for (int attempt = 0; attempt < 100 && !unrelated; ++attempt) {
                    const Triple& cand = kb.triples()[mix.uniform_index(kb.triples().size())];
                    if (cand.subject != t.subject) unrelated = &cand;
                }
                if (unrelated) {
                    const Subgraph ng = extract_subgraph(kb, *unrelated, opts.n_distractors,
                                                         derive_seed(line_seed, "mix-sub"));
                    const std::string block =
                        render_context(ng, kb, derive_seed(line_seed, "mix-ren"));
                    ctx = mix.uniform() < 0.5 ? block + " " + ctx : ctx + " " + block;
                }
            }
            lines.push_back(assemble_prompt_text(ctx, q) + " " + ans + " " + Vocab::kEnd);
        }
        for (int r = 0; r < opts.conflict_qa_repeats; ++r) {
            const std::uint64_t line_seed = derive_seed(
                opts.seed, "corpus-conf-" + std::to_string(index) + "-" + std::to_string(r));
            const Subgraph g = inject_conflict(
                extract_subgraph(kb, t, opts.n_distractors, line_seed), kb, line_seed);
            lines.push_back(assemble_prompt_text(render_context(g, kb, line_seed), q) + " " +
                            ans + " " + Vocab::kEnd);
        }
        for (int r = 0; r < opts.copy_qa_repeats; ++r) {
            const std::uint64_t line_seed = derive_seed(
                opts.seed, "corpus-copy-" + std::to_string(index) + "-" + std::to_string(r));
            Rng rng(line_seed);
            Triple synth;
            bool found = false;
            for (int guard = 0; guard < 1000 && !found; ++guard) {
                const int rel = static_cast<int>(
                    rng.uniform_index(static_cast<std::uint64_t>(kb.spec().n_relations)));
                const RelationSchema& sch = kb.relations()[static_cast<std::size_t>(rel)];
                const int s = kb.entity_id(
                    sch.subject_type, static_cast<int>(rng.uniform_index(
                                          static_cast<std::uint64_t>(kb.spec().entities_per_type))));
                bool used = false;
                for (const Triple& u : kb.triples())
                    if (u.subject == s && u.relation == rel) used = true;
                if (used) continue;
                const int o = kb.entity_id(
                    sch.object_type, static_cast<int>(rng.uniform_index(
                                         static_cast<std::uint64_t>(kb.spec().entities_per_type))));
                synth = Triple{s, rel, o, sch.object_type};
                found = true;
            }
            if (!found) continue;  // kb saturated: every pair already has a fact
            Subgraph g;
            g.triples.push_back(synth);
            g.answer_index = 0;
            for (int guard = 0;
                 static_cast<int>(g.triples.size()) < 1 + opts.n_distractors + 2 * (r % 2) &&
                 guard < 1000;
                 ++guard) {
                const Triple& cand =
                    kb.triples()[rng.uniform_index(kb.triples().size())];
                if (cand.object_type == synth.object_type && guard < 500) continue;
                bool dup = false;
                for (const Triple& u : g.triples)
                    if (u.subject == cand.subject && u.relation == cand.relation) dup = true;
                if (!dup) g.triples.push_back(cand);
            }
            lines.push_back(assemble_prompt_text(render_context(g, kb, line_seed),
                                                 kb.question_text(synth)) +
                            " " + kb.entity_surface(synth.object) + " " + Vocab::kEnd);
        }
        ++index;
    }
    return lines;
}

inline nlohmann::json instance_to_json(const QAInstance& inst) {
    nlohmann::json sources = nlohmann::json::array();
    for (const Triple& t : inst.source_triples)
        sources.push_back({t.subject, t.relation, t.object});
    nlohmann::json j = {{"id", inst.id},           {"question", inst.question},
                        {"context", inst.context}, {"answer", inst.answer},
                        {"conflict", inst.conflict}, {"noise", inst.noise},
                        {"source_triples", sources}};
    if (inst.perturbed_object >= 0)
        j["perturbed_object"] = inst.perturbed_object;
    else
        j["perturbed_object"] = nullptr;
    return j;
}

inline QAInstance instance_from_json(const nlohmann::json& j, const KnowledgeBase& kb) {
    QAInstance inst;
    inst.id = j.at("id").get<std::string>();
    inst.question = j.at("question").get<std::string>();
    inst.context = j.at("context").get<std::string>();
    inst.answer = j.at("answer").get<std::string>();
    inst.conflict = j.at("conflict").get<bool>();
    inst.noise = j.at("noise").get<bool>();
    for (const auto& t : j.at("source_triples")) {
        Triple tr;
        tr.subject = t.at(0).get<int>();
        tr.relation = t.at(1).get<int>();
        tr.object = t.at(2).get<int>();
        tr.object_type = kb.entity_type(tr.object);
        inst.source_triples.push_back(tr);
    }
    inst.perturbed_object = j.at("perturbed_object").is_null() ? -1 : j.at("perturbed_object").get<int>();
    inst.answer_object = inst.conflict ? inst.perturbed_object
                                       : (inst.source_triples.empty() ? -1 : inst.source_triples.front().object);
    return inst;
}

inline void write_dataset_jsonl(const std::string& path, const std::vector<QAInstance>& dataset) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError("cannot open dataset file for writing: " + path);
    for (const QAInstance& inst : dataset) os << instance_to_json(inst).dump() << '\n';
}

inline std::vector<QAInstance> read_dataset_jsonl(const std::string& path,
                                                  const KnowledgeBase& kb) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("cannot open dataset file: " + path);
    std::vector<QAInstance> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        out.push_back(instance_from_json(nlohmann::json::parse(line), kb));
    }
    return out;
}

}  // namespace dcrd
