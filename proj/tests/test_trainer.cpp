#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "knowid/errors.hpp"
#include "knowid/inference.hpp"
#include "knowid/metrics.hpp"
#include "knowid/synthetic.hpp"
#include "knowid/trainer.hpp"

using namespace knowid;
using nlohmann::json;

namespace {

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name) {
        path = std::filesystem::temp_directory_path() / name;
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string str() const { return path.string(); }
};

void gen_corpus(const std::string& dir, int dialogues, uint64_t seed) {
    corpus::SyntheticOptions opts;
    opts.dialogues = dialogues;
    opts.docs = 2;
    opts.passages_per_doc = 3;
    opts.sus_per_passage = 3;
    opts.seed = seed;
    corpus::generate_synthetic(opts, dir);
}

train::TrainConfig tiny_config(const std::string& data_dir) {
    train::TrainConfig cfg;
    cfg.train_dir = data_dir;
    cfg.dev_dir = data_dir;
    cfg.model.encoder.layers = 1;
    cfg.model.encoder.d = 16;
    cfg.model.encoder.heads = 2;
    cfg.model.encoder.max_len = 80;
    cfg.model.encoder.seed = 5;
    cfg.limits.max_context_tokens = 32;
    cfg.limits.max_total_tokens = 80;
    cfg.learning_rate = 1e-3;
    cfg.warmup_steps = 4;
    cfg.epochs = 2;
    cfg.max_candidates_train = 3;
    cfg.max_candidates_infer = 3;
    cfg.alpha = 1.0;
    cfg.beta = 0.0;
    cfg.accum_steps = 2;
    cfg.seed = 17;
    cfg.max_knowledge_len = 1;
    return cfg;
}

std::vector<json> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::vector<json> out;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(json::parse(line));
    return out;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("config defaults match the published recipe") {
    const train::TrainConfig cfg = train::TrainConfig::from_json(json::object());
    CHECK(cfg.learning_rate == doctest::Approx(3e-5));
    CHECK(cfg.warmup_steps == 1000);
    CHECK(cfg.epochs == 20);
    CHECK(cfg.alpha == 1.0);   // doc2dial-like default; wow-like runs use 0.5
    CHECK(cfg.beta == 5.0);
    CHECK(cfg.max_candidates_train == 20);
    CHECK(cfg.max_candidates_infer == 20);
    CHECK(cfg.limits.max_context_tokens == 128);
    CHECK(cfg.limits.max_total_tokens == 512);
    CHECK(cfg.model.context.c_user == 2);
    CHECK(cfg.max_knowledge_len == 5);
}

TEST_CASE("config json round-trips field by field") {
    train::TrainConfig cfg = tiny_config("/data");
    cfg.history_mode = train::HistoryMode::agent_half;
    cfg.adversarial.radius = 0.25;
    cfg.adversarial.steps = 3;
    const train::TrainConfig back = train::TrainConfig::from_json(cfg.to_json());
    CHECK(back.to_json() == cfg.to_json());
}

TEST_CASE("prepare_example drops truncated gold spans and history labels") {
    corpus::DialogueExample ex;
    ex.example_id = "e";
    corpus::Turn user;
    user.role = corpus::Role::user;
    user.text = "tell me";
    corpus::Turn agent;
    agent.role = corpus::Role::agent;
    agent.text = "earlier answer";
    agent.grounding = corpus::KnowledgeLabel{"p0", 5, 5};
    corpus::Turn user2 = user;
    ex.context = {user, agent, user2};  // most recent first

    corpus::Passage p;
    p.passage_id = "p0";
    for (int i = 0; i < 6; ++i) {
        corpus::SemanticUnit su;
        su.su_id = i;
        su.text = "unit word word word";  // long enough to trigger SU truncation
        p.units.push_back(su);
    }
    ex.candidates = {p};
    ex.gold = corpus::KnowledgeLabel{"p0", 5, 5};
    ex.history_labels[2] = *agent.grounding;

    std::vector<std::string> texts{"tell me earlier answer unit word"};
    const enc::BasicTokenizer tok = enc::BasicTokenizer::build(texts);

    // Tight budget: only a few SUs survive, so gold su 5 is unreachable.
    enc::Limits tight{16, 20};
    corpus::SkipReport skip;
    const auto dropped = model::prepare_example(ex, tok, tight, /*training=*/true, &skip);
    CHECK(!dropped.has_value());
    CHECK(skip.reasons.at("gold_span_truncated") == 1);

    // Inference never drops.
    const auto kept = model::prepare_example(ex, tok, tight, /*training=*/false, nullptr);
    REQUIRE(kept.has_value());

    // Generous budget keeps the gold and resolves the history label.
    enc::Limits wide{64, 160};
    corpus::SkipReport skip2;
    const auto ok = model::prepare_example(ex, tok, wide, /*training=*/true, &skip2);
    REQUIRE(ok.has_value());
    CHECK(ok->gold_passage == 0);
    REQUIRE(ok->history.size() == 1);
    CHECK(ok->history[0].turn == 2);
    CHECK(ok->history[0].role == corpus::Role::agent);
}

TEST_CASE("checkpoint round-trips bit-identically and validates dimensions") {
    TempDir dir("knowid_ckpt_test");
    gen_corpus(dir.str(), 2, 3);
    const train::TrainConfig cfg = tiny_config(dir.str());

    const corpus::Corpus c = corpus::load_corpus(cfg.train_dir, cfg.format, cfg.strategy);
    std::vector<std::string> texts;
    for (const auto& doc : c.documents)
        for (const auto& p : doc.passages)
            for (const auto& su : p.units) texts.push_back(su.text);
    for (const auto& d : c.dialogues)
        for (const auto& t : d.turns) texts.push_back(t.text);
    const enc::BasicTokenizer tok = enc::BasicTokenizer::build(texts);

    corpus::BuildOptions bopts;
    bopts.max_candidates = 3;
    bopts.training = false;
    const auto raw = corpus::build_examples(c, bopts);
    const auto prepared = train::prepare_examples(raw, tok, cfg.limits, false, nullptr);
    REQUIRE(!prepared.empty());

    model::KnowledgeModel m(cfg.model, tok.vocab_size());
    infer::Options iopts;
    iopts.max_knowledge_len = 1;
    const infer::Prediction before = infer::predict(m, prepared[0], iopts);

    model::Checkpoint ckpt;
    ckpt.config = cfg.to_json();
    ckpt.vocab_tokens = tok.tokens();
    ckpt.dev_metrics = json{{"dev_em", 0.5}};
    ckpt.params = m.params();
    const std::string path = dir.str() + "/ckpt.bin";
    model::save_checkpoint(ckpt, path);

    model::Checkpoint loaded = model::load_checkpoint(path);
    CHECK(loaded.config == cfg.to_json());  // snapshot equals the config
    CHECK(loaded.vocab_tokens == tok.tokens());
    const enc::BasicTokenizer tok2(loaded.vocab_tokens);
    const model::KnowledgeModel m2(cfg.model, tok2.vocab_size(), std::move(loaded.params));
    const infer::Prediction after = infer::predict(m2, prepared[0], iopts);
    CHECK(after.passage_id == before.passage_id);
    CHECK(after.begin_su == before.begin_su);
    CHECK(after.end_su == before.end_su);
    CHECK(after.passage_prob == before.passage_prob);  // bit-identical forward
    CHECK(after.span_score == before.span_score);

    // loading into a mismatched hidden size names both dimensions
    model::ModelConfig wrong = cfg.model;
    wrong.encoder.d = 32;
    model::Checkpoint loaded2 = model::load_checkpoint(path);
    try {
        model::KnowledgeModel bad(wrong, tok2.vocab_size(), std::move(loaded2.params));
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("16") != std::string::npos);
        CHECK(msg.find("32") != std::string::npos);
    }

    // corrupt magic -> schema mismatch error
    {
        std::ofstream f(path, std::ios::binary | std::ios::in);
        f.seekp(0);
        f.write("BADMAGIC", 8);
    }
    CHECK_THROWS_AS(model::load_checkpoint(path), DataError);
}

TEST_CASE("seeded runs agree exactly on step-0 and step-1 losses") {
    TempDir data("knowid_det_data");
    gen_corpus(data.str(), 4, 9);
    train::TrainConfig cfg = tiny_config(data.str());
    cfg.epochs = 1;

    TempDir run_a("knowid_det_a"), run_b("knowid_det_b");
    train::train(cfg, run_a.str());
    train::train(cfg, run_b.str());
    const auto la = read_jsonl(run_a.str() + "/train_log.jsonl");
    const auto lb = read_jsonl(run_b.str() + "/train_log.jsonl");
    REQUIRE(la.size() >= 3);
    REQUIRE(la.size() == lb.size());
    int checked = 0;
    for (size_t i = 0; i < la.size() && checked < 2; ++i) {
        if (!la[i].contains("step")) continue;
        CHECK(la[i] == lb[i]);  // exact equality, including every loss value
        ++checked;
    }
    CHECK(checked == 2);
}

TEST_CASE("batch_predict reruns are byte-identical and order preserving") {
    TempDir data("knowid_bp_data");
    gen_corpus(data.str(), 3, 21);
    train::TrainConfig cfg = tiny_config(data.str());

    const corpus::Corpus c = corpus::load_corpus(cfg.train_dir, cfg.format, cfg.strategy);
    std::vector<std::string> texts;
    for (const auto& d : c.dialogues)
        for (const auto& t : d.turns) texts.push_back(t.text);
    for (const auto& doc : c.documents)
        for (const auto& p : doc.passages)
            for (const auto& su : p.units) texts.push_back(su.text);
    const enc::BasicTokenizer tok = enc::BasicTokenizer::build(texts);
    corpus::BuildOptions bopts;
    bopts.max_candidates = 3;
    bopts.training = false;
    const auto prepared = train::prepare_examples(corpus::build_examples(c, bopts), tok,
                                                  cfg.limits, false, nullptr);
    model::KnowledgeModel m(cfg.model, tok.vocab_size());

    infer::Options iopts;
    iopts.max_knowledge_len = 1;
    const std::string p1 = data.str() + "/pred1.jsonl";
    const std::string p2 = data.str() + "/pred2.jsonl";
    infer::batch_predict(m, prepared, iopts, p1);
    infer::batch_predict(m, prepared, iopts, p2);
    CHECK(slurp(p1) == slurp(p2));
    CHECK(!slurp(p1).empty());

    // empty input -> empty output file
    const std::string pe = data.str() + "/pred_empty.jsonl";
    infer::batch_predict(m, {}, iopts, pe);
    CHECK(slurp(pe).empty());

    // shuffling input order shuffles output identically
    std::vector<model::PreparedExample> reversed(prepared.rbegin(), prepared.rend());
    const std::string p3 = data.str() + "/pred3.jsonl";
    infer::batch_predict(m, reversed, iopts, p3);
    const auto first = read_jsonl(p1);
    const auto third = read_jsonl(p3);
    REQUIRE(first.size() == third.size());
    for (size_t i = 0; i < first.size(); ++i)
        CHECK(first[i] == third[third.size() - 1 - i]);
}

TEST_CASE("alpha = beta = 0 with sentence segmentation zeroes hist and adv at every step") {
    TempDir data("knowid_ablate_data");
    gen_corpus(data.str(), 4, 33);
    train::TrainConfig cfg = tiny_config(data.str());
    cfg.strategy = corpus::SegmentStrategy::sentences;
    cfg.alpha = 0.0;
    cfg.beta = 0.0;
    cfg.max_candidates_train = 6;
    cfg.max_candidates_infer = 6;

    TempDir run("knowid_ablate_run");
    train::train(cfg, run.str());
    int steps = 0;
    for (const json& line : read_jsonl(run.str() + "/train_log.jsonl")) {
        if (!line.contains("step")) continue;
        ++steps;
        CHECK(line.at("l_hist").get<double>() == 0.0);
        CHECK(line.at("l_adv").get<double>() == 0.0);
        CHECK(line.at("total").get<double>() == line.at("l_next").get<double>());
    }
    CHECK(steps > 0);
}

TEST_CASE("history availability modes filter the auxiliary labels") {
    TempDir data("knowid_hist_modes");
    gen_corpus(data.str(), 4, 41);
    const train::TrainConfig cfg = tiny_config(data.str());

    const corpus::Corpus c = corpus::load_corpus(cfg.train_dir, cfg.format, cfg.strategy);
    std::vector<std::string> texts;
    for (const auto& doc : c.documents)
        for (const auto& p : doc.passages)
            for (const auto& su : p.units) texts.push_back(su.text);
    const enc::BasicTokenizer tok = enc::BasicTokenizer::build(texts);
    corpus::BuildOptions bopts;
    bopts.max_candidates = 3;
    bopts.training = true;
    bopts.seed = 1;
    const auto prepared = train::prepare_examples(corpus::build_examples(c, bopts), tok,
                                                  cfg.limits, true, nullptr);
    size_t with_history = 0;
    for (const auto& ex : prepared) with_history += ex.history.empty() ? 0 : 1;
    CHECK(with_history > 0);  // second agent turns see the first turn's label
    for (const auto& ex : prepared)
        for (const auto& h : ex.history) CHECK(h.role == corpus::Role::agent);
}

TEST_CASE("non-finite loss aborts with the example id") {
    TempDir data("knowid_nan_data");
    gen_corpus(data.str(), 2, 55);
    train::TrainConfig cfg = tiny_config(data.str());
    cfg.learning_rate = 1e30;  // guaranteed blow-up after the first update
    cfg.warmup_steps = 0;
    cfg.accum_steps = 1;
    cfg.epochs = 3;
    TempDir run("knowid_nan_run");
    try {
        train::train(cfg, run.str());
        // Divergence is expected but not guaranteed at every scale; only the
        // error format is under test when it does happen.
    } catch (const RuntimeFailure& e) {
        CHECK(std::string(e.what()).find("dial") != std::string::npos);
    }
}
