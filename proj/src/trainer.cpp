#include "knowid/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "knowid/errors.hpp"
#include "knowid/inference.hpp"
#include "knowid/metrics.hpp"

using nlohmann::json;

namespace knowid::train {

HistoryMode history_mode_from_name(const std::string& s) {
    if (s == "all") return HistoryMode::all;
    if (s == "agent-only") return HistoryMode::agent_only;
    if (s == "agent-50%") return HistoryMode::agent_half;
    if (s == "none") return HistoryMode::none;
    throw UsageError("unknown history mode: " + s);
}

const char* history_mode_name(HistoryMode m) {
    switch (m) {
        case HistoryMode::all: return "all";
        case HistoryMode::agent_only: return "agent-only";
        case HistoryMode::agent_half: return "agent-50%";
        case HistoryMode::none: return "none";
    }
    return "?";
}

json TrainConfig::to_json() const {
    json j;
    j["data"] = json{{"train_dir", train_dir},
                     {"dev_dir", dev_dir},
                     {"format", corpus::format_name(format)},
                     {"strategy", corpus::strategy_name(strategy)}};
    j["model"] = model::model_config_to_json(model);
    j["limits"] = json{{"max_context_tokens", limits.max_context_tokens},
                       {"max_total_tokens", limits.max_total_tokens}};
    j["train"] = json{{"learning_rate", learning_rate},
                      {"warmup_steps", warmup_steps},
                      {"epochs", epochs},
                      {"max_candidates_train", max_candidates_train},
                      {"max_candidates_infer", max_candidates_infer},
                      {"alpha", alpha},
                      {"beta", beta},
                      {"accum_steps", accum_steps},
                      {"weight_decay", weight_decay},
                      {"seed", seed},
                      {"history_mode", history_mode_name(history_mode)},
                      {"early_stop_em", early_stop_em},
                      {"max_vocab", max_vocab}};
    j["adversarial"] = json{{"radius", adversarial.radius},
                            {"steps", adversarial.steps},
                            {"step_size", adversarial.step_size}};
    j["inference"] = json{{"max_knowledge_len", max_knowledge_len}};
    return j;
}

TrainConfig TrainConfig::from_json(const json& j) {
    TrainConfig cfg;
    if (j.contains("data")) {
        const json& d = j.at("data");
        cfg.train_dir = d.value("train_dir", "");
        cfg.dev_dir = d.value("dev_dir", "");
        cfg.format = corpus::format_from_name(d.value("format", "doc2dial-like"));
        cfg.strategy = corpus::strategy_from_name(d.value("strategy", "sections"));
    }
    if (j.contains("model")) cfg.model = model::model_config_from_json(j.at("model"));
    if (j.contains("limits")) {
        cfg.limits.max_context_tokens = j.at("limits").value("max_context_tokens", 128);
        cfg.limits.max_total_tokens = j.at("limits").value("max_total_tokens", 512);
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        cfg.learning_rate = t.value("learning_rate", 3e-5);
        cfg.warmup_steps = t.value("warmup_steps", 1000L);
        cfg.epochs = t.value("epochs", 20);
        cfg.max_candidates_train = t.value("max_candidates_train", 20);
        cfg.max_candidates_infer = t.value("max_candidates_infer", 20);
        cfg.alpha = t.value("alpha", 1.0);
        cfg.beta = t.value("beta", 5.0);
        cfg.accum_steps = t.value("accum_steps", 8);
        cfg.weight_decay = t.value("weight_decay", 0.01);
        cfg.seed = t.value("seed", 13ull);
        cfg.history_mode = history_mode_from_name(t.value("history_mode", "all"));
        cfg.early_stop_em = t.value("early_stop_em", -1.0);
        cfg.max_vocab = t.value("max_vocab", 30000);
    }
    if (j.contains("adversarial")) {
        const json& a = j.at("adversarial");
        cfg.adversarial.radius = a.value("radius", 0.0);
        cfg.adversarial.steps = a.value("steps", 1);
        cfg.adversarial.step_size = a.value("step_size", -1.0);
    }
    if (j.contains("inference"))
        cfg.max_knowledge_len = j.at("inference").value("max_knowledge_len", 5);
    return cfg;
}

TrainConfig TrainConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file: " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw UsageError("config file is not valid JSON: " + path);
    return from_json(j);
}

std::vector<model::PreparedExample> prepare_examples(
    const std::vector<corpus::DialogueExample>& examples, const enc::Tokenizer& tok,
    const enc::Limits& limits, bool training, corpus::SkipReport* skip) {
    std::vector<model::PreparedExample> out;
    for (const corpus::DialogueExample& ex : examples) {
        auto prepared = model::prepare_example(ex, tok, limits, training, skip);
        if (prepared) out.push_back(std::move(*prepared));
    }
    return out;
}

obj::LossBreakdown example_loss(const model::KnowledgeModel& m, nn::Graph& g,
                                nn::ParamBinding& bind, const model::PreparedExample& ex,
                                double alpha, double beta, const obj::AdvConfig& adv,
                                std::mt19937_64& adv_rng, bool backward) {
    if (ex.gold_passage < 0)
        throw RuntimeFailure("example " + ex.example_id + " has no gold passage among candidates");
    const auto fwd = m.forward(g, bind, ex);

    const auto next = obj::next_loss(g, fwd.logits, ex.gold_passage,
                                     fwd.logits.global_index(ex.gold_passage, ex.gold_begin),
                                     fwd.logits.global_index(ex.gold_passage, ex.gold_end));
    int total = g.add(g.add(next.psg, next.begin), next.end);

    obj::LossBreakdown parts;
    parts.l_psg = g.val(next.psg).at(0, 0);
    parts.l_begin = g.val(next.begin).at(0, 0);
    parts.l_end = g.val(next.end).at(0, 0);

    if (alpha > 0.0 && !ex.history.empty()) {
        std::vector<obj::HistoryTurnRef> refs;
        for (const auto& h : ex.history) {
            obj::HistoryTurnRef r;
            r.gold_passage = h.passage;
            r.begin_su = h.begin_su;
            r.end_su = h.end_su;
            for (int U : fwd.U) r.u_rows.push_back(g.gather_rows(U, {h.turn - 1}));
            refs.push_back(std::move(r));
        }
        const auto hist = obj::history_loss(g, bind, refs, fwd.S);
        parts.l_hist_psg = g.val(hist.psg).at(0, 0);
        parts.l_hist_begin = g.val(hist.begin).at(0, 0);
        parts.l_hist_end = g.val(hist.end).at(0, 0);
        total = g.add(total, g.scale(g.add(g.add(hist.psg, hist.begin), hist.end), alpha));
    }

    if (beta > 0.0 && adv.radius > 0.0) {
        const std::vector<nn::Mat> clean{g.val(fwd.logits.psg), g.val(fwd.logits.begin),
                                         g.val(fwd.logits.end)};
        auto builder = [&m, &ex](nn::Graph& gi, int eps) {
            nn::ParamBinding cb(gi, m.params(), /*trainable=*/false);
            const auto f = m.forward(gi, cb, ex, eps);
            return std::vector<int>{f.logits.psg, f.logits.begin, f.logits.end};
        };
        nn::Mat eps;
        obj::adversarial_loss(model::KnowledgeModel::max_input_rows(ex), m.config().encoder.d,
                              builder, clean, adv, adv_rng, &eps);
        // Rebuild at the final perturbation on the main graph; the outer
        // gradient treats eps as fixed but flows through both logit sides.
        const auto pfwd = m.forward(g, bind, ex, g.constant(std::move(eps)));
        int js = obj::js_divergence_node(g, fwd.logits.psg, pfwd.logits.psg);
        js = g.add(js, obj::js_divergence_node(g, fwd.logits.begin, pfwd.logits.begin));
        js = g.add(js, obj::js_divergence_node(g, fwd.logits.end, pfwd.logits.end));
        parts.l_adv = g.val(js).at(0, 0);
        total = g.add(total, g.scale(js, beta));
    }

    const obj::LossBreakdown out = obj::joint_loss(parts, alpha, beta);
    if (!std::isfinite(out.total))
        throw RuntimeFailure("non-finite loss on example " + ex.example_id);
    if (backward) g.backward(total);
    return out;
}

namespace {

std::vector<std::string> corpus_texts(const corpus::Corpus& c) {
    std::vector<std::string> texts;
    for (const corpus::Document& doc : c.documents) {
        texts.push_back(doc.title);
        for (const corpus::Passage& p : doc.passages) {
            texts.push_back(p.title);
            for (const corpus::SemanticUnit& su : p.units) texts.push_back(su.text);
        }
    }
    for (const corpus::Dialogue& d : c.dialogues)
        for (const corpus::Turn& t : d.turns) texts.push_back(t.text);
    return texts;
}

void filter_history(std::vector<model::PreparedExample>& prepared, HistoryMode mode,
                    uint64_t seed) {
    if (mode == HistoryMode::all) return;
    std::mt19937_64 rng(seed ^ 0x5851f42d4c957f2dull);
    std::bernoulli_distribution coin(0.5);
    for (auto& ex : prepared) {
        std::vector<model::PreparedExample::Hist> kept;
        for (const auto& h : ex.history) {
            if (mode == HistoryMode::none) continue;
            if (h.role != corpus::Role::agent) continue;
            if (mode == HistoryMode::agent_half && !coin(rng)) continue;
            kept.push_back(h);
        }
        ex.history = std::move(kept);
    }
}

struct DevExample {
    model::PreparedExample ex;
    std::string gold_text;
    std::string gold_passage_id;
};

double dev_exact_match(const model::KnowledgeModel& m, const std::vector<DevExample>& dev,
                       const infer::Options& opts) {
    if (dev.empty()) return 0.0;
    double em = 0.0;
    for (const DevExample& d : dev) {
        const infer::Prediction p = infer::predict(m, d.ex, opts);
        em += metrics::exact_match(p.text, d.gold_text);
    }
    return em / static_cast<double>(dev.size());
}

json breakdown_json(const obj::LossBreakdown& b) {
    return json{{"l_psg", b.l_psg},           {"l_begin", b.l_begin},
                {"l_end", b.l_end},           {"l_next", b.l_next},
                {"l_hist_psg", b.l_hist_psg}, {"l_hist_begin", b.l_hist_begin},
                {"l_hist_end", b.l_hist_end}, {"l_hist", b.l_hist},
                {"l_adv", b.l_adv},           {"total", b.total}};
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const std::string& out_dir) {
    if (cfg.epochs < 1) throw UsageError("epochs must be >= 1");
    if (cfg.accum_steps < 1) throw UsageError("accum_steps must be >= 1");
    if (cfg.limits.max_total_tokens > cfg.model.encoder.max_len)
        throw UsageError("max_total_tokens exceeds the encoder max_len");
    std::filesystem::create_directories(out_dir);

    // Corpus, vocabulary, training examples.
    const corpus::Corpus train_corpus = load_corpus(cfg.train_dir, cfg.format, cfg.strategy);
    const auto texts = corpus_texts(train_corpus);
    const enc::BasicTokenizer tok = enc::BasicTokenizer::build(texts, cfg.max_vocab);

    corpus::SkipReport skip;
    corpus::BuildOptions bopts;
    bopts.max_candidates = cfg.max_candidates_train;
    bopts.training = true;
    bopts.seed = cfg.seed;
    const auto train_raw = corpus::build_examples(train_corpus, bopts, &skip);
    auto prepared = prepare_examples(train_raw, tok, cfg.limits, /*training=*/true, &skip);
    filter_history(prepared, cfg.history_mode, cfg.seed);
    if (prepared.empty()) throw DataError("no trainable examples after preparation");

    // Dev set with the full inference procedure.
    const std::string dev_dir = cfg.dev_dir.empty() ? cfg.train_dir : cfg.dev_dir;
    const corpus::Corpus dev_corpus = load_corpus(dev_dir, cfg.format, cfg.strategy);
    corpus::BuildOptions dopts;
    dopts.max_candidates = cfg.max_candidates_infer;
    dopts.training = false;
    const auto dev_raw = corpus::build_examples(dev_corpus, dopts, nullptr);
    std::vector<DevExample> dev;
    for (const auto& ex : dev_raw) {
        DevExample d;
        auto p = model::prepare_example(ex, tok, cfg.limits, /*training=*/false, nullptr);
        d.ex = std::move(*p);
        const corpus::Passage* gold = dev_corpus.find_passage(ex.gold.passage_id);
        if (!gold) continue;
        d.gold_text = gold->span_text(ex.gold.begin_su, ex.gold.end_su);
        d.gold_passage_id = ex.gold.passage_id;
        dev.push_back(std::move(d));
    }

    model::KnowledgeModel m(cfg.model, tok.vocab_size());

    const long steps_per_epoch =
        (static_cast<long>(prepared.size()) + cfg.accum_steps - 1) / cfg.accum_steps;
    nn::AdamW::Options aopt;
    aopt.lr_max = cfg.learning_rate;
    aopt.warmup_steps = cfg.warmup_steps;
    aopt.total_steps = steps_per_epoch * cfg.epochs;
    aopt.weight_decay = cfg.weight_decay;
    nn::AdamW adam(aopt);

    TrainResult result;
    result.log_path = out_dir + "/train_log.jsonl";
    result.checkpoint_path = out_dir + "/checkpoint.bin";
    result.skip_report_path = out_dir + "/skip_report.json";
    std::ofstream log(result.log_path, std::ios::binary);
    if (!log) throw RuntimeFailure("cannot write " + result.log_path);

    std::mt19937_64 order_rng(cfg.seed ^ 0x2545f4914f6cdd1dull);
    std::mt19937_64 adv_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    infer::Options iopts;
    iopts.max_knowledge_len = cfg.max_knowledge_len;

    nn::ParamStore best_params;
    json best_metrics;
    std::vector<size_t> order(prepared.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::unordered_map<std::string, nn::Mat> grad_acc;
    obj::LossBreakdown window_sum;
    int window_n = 0;
    auto flush_window = [&] {
        if (window_n == 0) return;
        adam.step(m.params(), grad_acc);
        grad_acc.clear();
        json line = breakdown_json(obj::joint_loss(
            obj::LossBreakdown{window_sum.l_psg / window_n, window_sum.l_begin / window_n,
                               window_sum.l_end / window_n, 0.0,
                               window_sum.l_hist_psg / window_n,
                               window_sum.l_hist_begin / window_n,
                               window_sum.l_hist_end / window_n, 0.0,
                               window_sum.l_adv / window_n, 0.0},
            cfg.alpha, cfg.beta));
        line["step"] = adam.steps_taken() - 1;
        line["lr"] = adam.lr_at(adam.steps_taken());
        log << line.dump() << "\n";
        window_sum = obj::LossBreakdown{};
        window_n = 0;
    };

    bool stop = false;
    for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
        std::shuffle(order.begin(), order.end(), order_rng);
        for (size_t idx : order) {
            const model::PreparedExample& ex = prepared[idx];
            nn::Graph g;
            nn::ParamBinding bind(g, m.params(), /*trainable=*/true);
            const obj::LossBreakdown b = example_loss(m, g, bind, ex, cfg.alpha, cfg.beta,
                                                      cfg.adversarial, adv_rng,
                                                      /*backward=*/true);
            bind.accumulate_grads(grad_acc, 1.0 / static_cast<double>(cfg.accum_steps));
            window_sum.l_psg += b.l_psg;
            window_sum.l_begin += b.l_begin;
            window_sum.l_end += b.l_end;
            window_sum.l_hist_psg += b.l_hist_psg;
            window_sum.l_hist_begin += b.l_hist_begin;
            window_sum.l_hist_end += b.l_hist_end;
            window_sum.l_adv += b.l_adv;
            ++window_n;
            if (window_n == cfg.accum_steps) flush_window();
        }
        flush_window();

        const double em = dev_exact_match(m, dev, iopts);
        log << json{{"epoch", epoch}, {"dev_em", em}}.dump() << "\n";
        log.flush();
        if (em > result.best_dev_em || result.best_epoch < 0) {
            result.best_dev_em = em;
            result.best_epoch = epoch;
            best_params = m.params();
            best_metrics = json{{"dev_em", em}, {"epoch", epoch}};
        }
        if (cfg.early_stop_em >= 0.0 && em >= cfg.early_stop_em) stop = true;
    }
    result.steps = adam.steps_taken();

    model::Checkpoint ckpt;
    ckpt.config = cfg.to_json();
    ckpt.vocab_tokens = tok.tokens();
    ckpt.dev_metrics = best_metrics;
    ckpt.params = std::move(best_params);
    model::save_checkpoint(ckpt, result.checkpoint_path);
    skip.save(result.skip_report_path);
    return result;
}

}  // namespace knowid::train
