// knowid: train and run a multi-passage knowledge identification model for
// document-grounded dialogue.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "knowid/corpus.hpp"
#include "knowid/errors.hpp"
#include "knowid/inference.hpp"
#include "knowid/metrics.hpp"
#include "knowid/synthetic.hpp"
#include "knowid/tokenizer.hpp"
#include "knowid/trainer.hpp"

using namespace knowid;

namespace {

int cmd_segment(const std::string& documents, const std::string& strategy,
                const std::string& out) {
    const auto raws = corpus::read_raw_documents(documents);
    std::vector<corpus::Document> segmented;
    for (const auto& raw : raws)
        segmented.push_back(corpus::segment_document(raw, corpus::strategy_from_name(strategy)));
    corpus::write_segmented_documents(segmented, out);
    std::cout << "segmented " << segmented.size() << " documents -> " << out << "\n";
    return 0;
}

int cmd_build_examples(const std::string& data, const std::string& format,
                       const std::string& strategy, bool train_mode, int max_candidates,
                       uint64_t seed, const std::string& out, const std::string& refs_path,
                       const std::string& skip_path, const std::string& seen_docs_path) {
    const corpus::Corpus c = corpus::load_corpus(data, corpus::format_from_name(format),
                                                 corpus::strategy_from_name(strategy));
    corpus::BuildOptions opts;
    opts.max_candidates = max_candidates;
    opts.training = train_mode;
    opts.seed = seed;
    corpus::SkipReport skip;
    const auto examples = corpus::build_examples(c, opts, &skip);
    corpus::save_examples(examples, out);

    if (!refs_path.empty()) {
        std::set<std::string> seen_docs;
        if (!seen_docs_path.empty()) {
            std::ifstream in(seen_docs_path);
            if (!in) throw DataError("cannot open seen-docs list: " + seen_docs_path);
            std::string line;
            while (std::getline(in, line))
                if (!line.empty()) seen_docs.insert(line);
        }
        std::vector<metrics::Reference> refs;
        for (const auto& ex : examples) {
            const corpus::Passage* gold = c.find_passage(ex.gold.passage_id);
            if (!gold) continue;
            metrics::Reference r;
            r.example_id = ex.example_id;
            r.passage_id = ex.gold.passage_id;
            r.begin_su = ex.gold.begin_su;
            r.end_su = ex.gold.end_su;
            r.text = gold->span_text(ex.gold.begin_su, ex.gold.end_su);
            r.doc_id = ex.doc_id;
            r.split = seen_docs_path.empty() || seen_docs.count(ex.doc_id) ? "seen" : "unseen";
            refs.push_back(std::move(r));
        }
        metrics::write_references(refs, refs_path);
    }
    if (!skip_path.empty()) skip.save(skip_path);
    std::cout << "built " << examples.size() << " examples (" << skip.dropped_examples
              << " dropped) -> " << out << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir, int64_t seed) {
    train::TrainConfig cfg = train::TrainConfig::load(config_path);
    if (seed >= 0) cfg.seed = static_cast<uint64_t>(seed);
    const train::TrainResult res = train::train(cfg, out_dir);
    std::cout << "best dev EM " << res.best_dev_em << " at epoch " << res.best_epoch << " after "
              << res.steps << " steps\n"
              << "checkpoint: " << res.checkpoint_path << "\n";
    return 0;
}

int cmd_predict(const std::string& checkpoint, const std::string& examples_path,
                const std::string& out, int max_knowledge_len, bool log_prob_score) {
    model::Checkpoint ckpt = model::load_checkpoint(checkpoint);
    const train::TrainConfig cfg = train::TrainConfig::from_json(ckpt.config);
    const enc::BasicTokenizer tok(ckpt.vocab_tokens);
    const model::KnowledgeModel m(cfg.model, tok.vocab_size(), std::move(ckpt.params));

    const auto raw = corpus::load_examples(examples_path);
    const auto prepared =
        train::prepare_examples(raw, tok, cfg.limits, /*training=*/false, nullptr);

    infer::Options opts;
    opts.max_knowledge_len = max_knowledge_len > 0 ? max_knowledge_len : cfg.max_knowledge_len;
    opts.log_prob_score = log_prob_score;
    infer::batch_predict(m, prepared, opts, out);
    std::cout << "wrote " << prepared.size() << " predictions -> " << out << "\n";
    return 0;
}

int cmd_evaluate(const std::string& predictions, const std::string& references,
                 const std::string& out) {
    const auto preds = infer::read_predictions(predictions);
    const auto refs = metrics::read_references(references);
    const metrics::EvalReport report = metrics::evaluate(preds, refs);
    metrics::write_report(report, out);
    std::cout << report.to_json().dump(2) << "\n";
    return 0;
}

int cmd_gen_synthetic(const std::string& out_dir, int dialogues, int docs, int passages, int sus,
                      uint64_t seed) {
    std::filesystem::create_directories(out_dir);
    corpus::SyntheticOptions opts;
    opts.dialogues = dialogues;
    opts.docs = docs;
    opts.passages_per_doc = passages;
    opts.sus_per_passage = sus;
    opts.seed = seed;
    corpus::generate_synthetic(opts, out_dir);
    std::cout << "wrote synthetic corpus (" << dialogues << " dialogues) -> " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-passage knowledge identification for document-grounded dialogue"};
    app.require_subcommand(1);

    // segment
    std::string seg_documents, seg_strategy = "sections", seg_out;
    auto* seg = app.add_subcommand("segment", "segment documents.jsonl into passages");
    seg->add_option("--documents", seg_documents, "documents.jsonl")->required();
    seg->add_option("--strategy", seg_strategy, "sections|sentences|whole");
    seg->add_option("--out", seg_out, "output segmented corpus")->required();

    // build-examples
    std::string be_data, be_format = "doc2dial-like", be_strategy = "sections", be_out;
    std::string be_refs, be_skip, be_seen_docs, be_mode = "infer";
    int be_max_candidates = 20;
    uint64_t be_seed = 0;
    auto* be = app.add_subcommand("build-examples", "construct per-agent-turn examples");
    be->add_option("--data", be_data, "corpus directory with documents.jsonl + dialogues.jsonl")
        ->required();
    be->add_option("--format", be_format, "doc2dial-like|wow-like");
    be->add_option("--strategy", be_strategy, "sections|sentences|whole");
    be->add_option("--mode", be_mode, "train (sampled negatives) | infer (first-N passages)");
    be->add_option("--max-candidates", be_max_candidates, "candidate passage budget");
    be->add_option("--seed", be_seed, "negative sampling seed");
    be->add_option("--out", be_out, "examples.jsonl output")->required();
    be->add_option("--references", be_refs, "also write references.jsonl");
    be->add_option("--skip-report", be_skip, "write skip report JSON");
    be->add_option("--seen-docs", be_seen_docs, "doc ids seen in training, one per line");

    // train
    std::string tr_config, tr_out = "run";
    int64_t tr_seed = -1;
    auto* tr = app.add_subcommand("train", "train a model from a config file");
    tr->add_option("--config", tr_config, "training config JSON")->required();
    tr->add_option("--out", tr_out, "output directory");
    tr->add_option("--seed", tr_seed, "override the config seed");

    // predict
    std::string pr_ckpt, pr_examples, pr_out;
    int pr_max_len = 0;
    bool pr_logprob = false;
    auto* pr = app.add_subcommand("predict", "run next-turn knowledge prediction");
    pr->add_option("--checkpoint", pr_ckpt, "model checkpoint")->required();
    pr->add_option("--examples", pr_examples, "examples.jsonl")->required();
    pr->add_option("--out", pr_out, "predictions.jsonl output")->required();
    pr->add_option("--max-knowledge-len", pr_max_len, "span length cap (default: from config)");
    pr->add_flag("--log-prob-score", pr_logprob, "score spans by summed log probabilities");

    // evaluate
    std::string ev_pred, ev_refs, ev_out = "report.json";
    auto* ev = app.add_subcommand("evaluate", "score predictions against references");
    ev->add_option("--predictions", ev_pred, "predictions.jsonl")->required();
    ev->add_option("--references", ev_refs, "references.jsonl")->required();
    ev->add_option("--out", ev_out, "report JSON output");

    // gen-synthetic
    std::string gs_out;
    int gs_dialogues = 32, gs_docs = 4, gs_passages = 4, gs_sus = 4;
    uint64_t gs_seed = 7;
    auto* gs = app.add_subcommand("gen-synthetic", "generate a small synthetic corpus");
    gs->add_option("--out", gs_out, "output directory")->required();
    gs->add_option("--dialogues", gs_dialogues, "number of dialogues");
    gs->add_option("--docs", gs_docs, "number of documents");
    gs->add_option("--passages", gs_passages, "passages per document");
    gs->add_option("--sus", gs_sus, "semantic units per passage");
    gs->add_option("--seed", gs_seed, "generation seed");

    try {
        app.parse(argc, argv);
        if (seg->parsed()) return cmd_segment(seg_documents, seg_strategy, seg_out);
        if (be->parsed()) {
            if (be_mode != "train" && be_mode != "infer")
                throw UsageError("--mode must be train or infer");
            return cmd_build_examples(be_data, be_format, be_strategy, be_mode == "train",
                                      be_max_candidates, be_seed, be_out, be_refs, be_skip,
                                      be_seen_docs);
        }
        if (tr->parsed()) return cmd_train(tr_config, tr_out, tr_seed);
        if (pr->parsed())
            return cmd_predict(pr_ckpt, pr_examples, pr_out, pr_max_len, pr_logprob);
        if (ev->parsed()) return cmd_evaluate(ev_pred, ev_refs, ev_out);
        if (gs->parsed())
            return cmd_gen_synthetic(gs_out, gs_dialogues, gs_docs, gs_passages, gs_sus, gs_seed);
        return 1;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
