#include "hart/cli/app.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "hart/cli/config.hpp"
#include "hart/corpus/corpus.hpp"
#include "hart/corpus/split.hpp"
#include "hart/corpus/synthetic.hpp"
#include "hart/eval/metrics.hpp"
#include "hart/eval/perplexity.hpp"
#include "hart/eval/significance.hpp"
#include "hart/finetune/finetune.hpp"
#include "hart/finetune/labeled.hpp"
#include "hart/finetune/tasks.hpp"
#include "hart/train/checkpoint.hpp"
#include "hart/train/pretrain.hpp"
#include "hart/util/text.hpp"

#ifndef HART_VERSION_STRING
#define HART_VERSION_STRING "0.0.0"
#endif

namespace hart::cli {

std::string_view version() { return HART_VERSION_STRING; }

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

// One writer per output directory at a time.
class DirLock {
public:
    explicit DirLock(const fs::path& dir) : path_(dir / ".lock") {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw UserError("cannot create output directory " + dir.string() + ": " + ec.message());
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0) {
            if (errno == EEXIST) {
                throw UserError("output directory " + dir.string() +
                                " is locked by another run (delete " + path_.string() +
                                " if it is stale)");
            }
            throw UserError("cannot create lock file " + path_.string() + ": " + std::strerror(errno));
        }
        const std::string pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] auto n = ::write(fd_, pid.data(), pid.size());
    }
    ~DirLock() {
        ::close(fd_);
        std::error_code ec;
        fs::remove(path_, ec);
    }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    fs::path path_;
    int fd_ = -1;
};

struct Ctx {
    ExperimentConfig cfg;
    std::ostream& out;
    std::string command;
    fs::path dir() const { return cfg.out_dir; }
};

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw UserError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw UserError("cannot write " + p.string());
    out << content;
}

const fs::path& require_path(const Ctx& c, const fs::path& p, const std::string& key) {
    if (p.empty()) {
        throw UserError(c.command + " needs config field '" + key + "' (or the matching flag)");
    }
    if (!fs::exists(p)) throw UserError(key + ": file not found: " + p.string());
    return p;
}

json base_report(const Ctx& c) {
    return json{{"command", c.command},
                {"config_hash", c.cfg.hash},
                {"seed", c.cfg.seed},
                {"version", std::string(version())}};
}

// Content fingerprint of an input file.
std::string fingerprint(const fs::path& p) { return util::fnv1a_hex(read_file(p)); }

void write_report(const Ctx& c, const std::string& name, const json& j) {
    write_file(c.dir() / name, j.dump(2) + "\n");
    c.out << "wrote " << (c.dir() / name).string() << "\n";
}

json significance_json(const eval::Significance& s) {
    return json{{"comparator", s.comparator},
                {"test", s.test},
                {"p_value", s.p_value},
                {"n_resamples", s.n_resamples},
                {"seed", s.seed}};
}

double run_test(const ExperimentConfig& cfg, std::span<const double> a, std::span<const double> b) {
    return cfg.test == "bootstrap" ? eval::bootstrap_test(a, b, cfg.n_resamples, cfg.seed)
                                   : eval::permutation_test(a, b, cfg.n_resamples, cfg.seed);
}

train::Checkpoint load_ckpt(const Ctx& c, const fs::path& p, const std::string& key) {
    require_path(c, p, key);
    try {
        return train::load_checkpoint(p);
    } catch (const std::runtime_error& e) {
        throw UserError(key + ": " + e.what());
    }
}

corpus::UserCorpus load_corpus_checked(const Ctx& c, const fs::path& p, const std::string& key) {
    require_path(c, p, key);
    corpus::LoadStats stats;
    auto corpus = corpus::load_corpus(p, &stats);
    for (const auto& w : stats.warnings) std::cerr << "warning: " << p.string() << ": " << w << "\n";
    return corpus;
}

// The corpus vocabulary (when given) must be the checkpoint's.
void check_vocab(const Ctx& c, const corpus::Vocabulary& ckpt_vocab) {
    if (c.cfg.paths.vocab.empty()) return;
    require_path(c, c.cfg.paths.vocab, "paths.vocab");
    const auto v = corpus::Vocabulary::load(c.cfg.paths.vocab);
    if (!(v == ckpt_vocab)) {
        throw UserError("vocabulary mismatch: corpus vocabulary " + c.cfg.paths.vocab.string() +
                        " (" + std::to_string(v.size()) + " tokens) differs from the checkpoint "
                        "vocabulary (" + std::to_string(ckpt_vocab.size()) + " tokens)");
    }
}

train::InstanceKind ckpt_instances(const train::Checkpoint& ck) {
    const auto it = ck.meta.find("instances");
    return it != ck.meta.end() && it->second == "per_message" ? train::InstanceKind::per_message
                                                               : train::InstanceKind::user_blocks;
}

std::string meta_or(const train::Checkpoint& ck, const std::string& key, const std::string& def) {
    const auto it = ck.meta.find(key);
    return it == ck.meta.end() ? def : it->second;
}

// ---- gen-data ----------------------------------------------------------------

int cmd_gen_data(Ctx& c) {
    DirLock lock(c.dir());
    json rep = base_report(c);
    rep["task"] = c.cfg.task;
    corpus::SyntheticCorpus data;
    if (c.cfg.task == "lm") {
        data = corpus::generate_synthetic_corpus(c.cfg.data);
    } else if (c.cfg.task == "document") {
        auto task = finetune::generate_document_task(c.cfg.doc_task);
        data = std::move(task.data);
        finetune::save_labeled(task.labels, c.dir() / "labels.tsv");
        rep["labels"] = task.labels.size();
    } else {
        finetune::UserTaskConfig ut{c.cfg.data, c.cfg.task_dev_fraction, c.cfg.task_test_fraction};
        auto task = finetune::generate_user_task(ut);
        data = std::move(task.data);
        finetune::save_labeled(task.labels, c.dir() / "labels.tsv");
        rep["labels"] = task.labels.size();
    }
    corpus::save_corpus(data.corpus, c.dir() / "corpus.tsv");
    std::string lat = "user_id\tbias\tstyle\n";
    for (const auto& l : data.latents) {
        lat += l.user_id + '\t' + util::format_double(l.bias) + '\t' + std::to_string(l.style) + '\n';
    }
    write_file(c.dir() / "latents.tsv", lat);
    rep["users"] = data.corpus.num_users();
    rep["messages"] = data.corpus.num_messages();
    write_report(c, "gen-data.json", rep);
    return 0;
}

// ---- split -------------------------------------------------------------------

int cmd_split(Ctx& c) {
    const auto corpus = load_corpus_checked(c, c.cfg.paths.corpus, "paths.corpus");
    DirLock lock(c.dir());
    const auto s = corpus::split_users(corpus, c.cfg.split, c.cfg.seed);
    corpus::save_corpus(s.train, c.dir() / "train.tsv");
    corpus::save_corpus(s.dev_unseen, c.dir() / "dev.tsv");
    corpus::save_corpus(s.test_unseen, c.dir() / "test.tsv");
    if (!s.dev_seen_heldout.empty()) corpus::save_corpus(s.dev_seen_heldout, c.dir() / "dev_seen.tsv");
    json rep = base_report(c);
    rep["inputs"] = {{"corpus", fingerprint(c.cfg.paths.corpus)}};
    rep["train_users"] = s.train.num_users();
    rep["dev_users"] = s.dev_unseen.num_users();
    rep["test_users"] = s.test_unseen.num_users();
    rep["dev_seen_users"] = s.dev_seen_heldout.num_users();
    write_report(c, "split.json", rep);
    return 0;
}

// ---- pretrain ----------------------------------------------------------------

int cmd_pretrain(Ctx& c) {
    const auto& cfg = c.cfg;
    const auto train_corpus = load_corpus_checked(c, cfg.paths.train, "paths.train");
    corpus::UserCorpus dev_corpus;
    if (!cfg.paths.dev.empty()) dev_corpus = load_corpus_checked(c, cfg.paths.dev, "paths.dev");
    corpus::Vocabulary vocab;
    if (!cfg.paths.vocab.empty()) {
        vocab = corpus::Vocabulary::load(require_path(c, cfg.paths.vocab, "paths.vocab"));
    } else {
        vocab = corpus::Vocabulary::build(train_corpus, cfg.min_count);
    }
    model::ModelConfig mc = cfg.model;
    mc.vocab_size = vocab.size();
    try {
        mc.validate();
    } catch (const std::invalid_argument& e) {
        throw UserError(std::string("model config: ") + e.what());
    }

    DirLock lock(c.dir());
    const auto tr = train::build_instances(train_corpus, vocab, mc.block_size, mc.max_blocks,
                                           cfg.instances, false);
    const auto dv = train::build_instances(dev_corpus, vocab, mc.block_size, mc.max_blocks,
                                           cfg.instances, false);
    std::ofstream metrics(c.dir() / "metrics.jsonl", std::ios::trunc);
    auto log = [&](const train::MetricsRecord& r) {
        metrics << json{{"step", r.step}, {"epoch", r.epoch}, {"train_nll", r.train_nll},
                        {"dev_nll", r.dev_nll}, {"ppl", r.ppl}}.dump()
                << "\n";
        metrics.flush();
        c.out << "epoch " << r.epoch << " step " << r.step << " train_nll " << r.train_nll
              << " dev_nll " << r.dev_nll << "\n";
    };
    train::TrainResult res;
    try {
        res = train::pretrain(model::init_model(mc, cfg.seed), cfg.train, tr, dv, log);
    } catch (const train::TrainingDiverged& e) {
        throw UserError(std::string("pretraining aborted: ") + e.what());
    }

    train::Checkpoint ck;
    ck.model = std::move(res.model);
    ck.vocab = vocab;
    ck.optimizer = res.optimizer;
    ck.meta = {{"epoch", std::to_string(res.best_epoch)},
               {"dev_nll", util::format_double(res.best_dev_nll)},
               {"steps", std::to_string(res.steps)},
               {"seed", std::to_string(cfg.seed)},
               {"config_hash", cfg.hash},
               {"version", std::string(version())},
               {"mode", std::string(model::mode_name(cfg.train.mode))},
               {"instances", cfg.instances == train::InstanceKind::per_message ? "per_message"
                                                                               : "user_blocks"}};
    train::save_checkpoint(ck, c.dir() / "ckpt");
    vocab.save(c.dir() / "vocab.txt");

    json rep = base_report(c);
    rep["inputs"] = {{"train", fingerprint(cfg.paths.train)}};
    if (!cfg.paths.dev.empty()) rep["inputs"]["dev"] = fingerprint(cfg.paths.dev);
    rep["best_epoch"] = res.best_epoch;
    rep["best_dev_nll"] = res.best_dev_nll;
    rep["steps"] = res.steps;
    rep["early_stopped"] = res.early_stopped;
    rep["train_instances"] = tr.size();
    write_report(c, "pretrain.json", rep);
    return 0;
}

// ---- eval-ppl ----------------------------------------------------------------

std::vector<corpus::BlockSequence> eval_instances(const train::Checkpoint& ck,
                                                  const corpus::UserCorpus& corpus,
                                                  std::size_t history_blocks) {
    const auto& mc = ck.model.config;
    const std::size_t cap = history_blocks ? history_blocks : mc.max_blocks;
    return train::build_instances(corpus, ck.vocab, mc.block_size, cap, ckpt_instances(ck), false);
}

int cmd_eval_ppl(Ctx& c) {
    const auto& cfg = c.cfg;
    const auto ck = load_ckpt(c, cfg.paths.checkpoint, "paths.checkpoint");
    const auto corpus = load_corpus_checked(c, cfg.paths.corpus, "paths.corpus");
    check_vocab(c, ck.vocab);
    DirLock lock(c.dir());
    const auto seqs = eval_instances(ck, corpus, cfg.history_blocks);
    const auto mode = ckpt_instances(ck) == train::InstanceKind::per_message
                          ? model::RecurrenceMode::no_history
                          : cfg.eval_mode;
    const auto r = eval::perplexity(ck.model, seqs, mode, cfg.history_blocks);

    json rep = base_report(c);
    rep["inputs"] = {{"checkpoint", fingerprint(cfg.paths.checkpoint)},
                     {"corpus", fingerprint(cfg.paths.corpus)}};
    rep["metric"] = "perplexity";
    rep["value"] = r.ppl;
    rep["tokens"] = r.tokens;
    rep["mode"] = std::string(model::mode_name(mode));
    rep["history_blocks"] = cfg.history_blocks;
    rep["users"] = r.users;
    rep["per_instance"] = r.user_mean_nll();
    c.out << "perplexity " << r.ppl << " over " << r.tokens << " tokens\n";

    if (!cfg.paths.baseline.empty()) {
        const auto base = load_ckpt(c, cfg.paths.baseline, "paths.baseline");
        if (!(base.vocab == ck.vocab)) {
            throw UserError("vocabulary mismatch between paths.checkpoint and paths.baseline");
        }
        const auto base_seqs = eval_instances(base, corpus, 0);
        const auto base_mode = ckpt_instances(base) == train::InstanceKind::per_message
                                   ? model::RecurrenceMode::no_history
                                   : cfg.eval_mode;
        const auto joint = eval::compare_perplexity(ck.model, seqs, mode, base.model, base_seqs,
                                                    base_mode, eval::PairedScoring::joint);
        const auto words = eval::compare_perplexity(ck.model, seqs, mode, base.model, base_seqs,
                                                    base_mode, eval::PairedScoring::word_conditional);
        const bool use_words = cfg.paired_scoring == eval::PairedScoring::word_conditional;
        const auto& paired = use_words ? words : joint;
        const auto a = paired.a.user_mean_nll();
        const auto b = paired.b.user_mean_nll();
        eval::Significance s{"baseline", cfg.test, run_test(cfg, a, b), cfg.n_resamples, cfg.seed};
        rep["inputs"]["baseline"] = fingerprint(cfg.paths.baseline);
        rep["paired"] = {{"scoring", use_words ? "word_conditional" : "joint"},
                         {"tokens", paired.a.tokens},
                         {"ppl_model", paired.a.ppl},
                         {"ppl_baseline", paired.b.ppl},
                         {"adjusted_perplexity", eval::adjusted_perplexity(paired.a.ppl, paired.b.ppl)},
                         {"joint", {{"ppl_model", joint.a.ppl}, {"ppl_baseline", joint.b.ppl}}},
                         {"word_conditional", {{"ppl_model", words.a.ppl}, {"ppl_baseline", words.b.ppl}}},
                         {"per_instance_model", a},
                         {"per_instance_baseline", b}};
        rep["significance"] = json::array({significance_json(s)});
        c.out << "paired perplexity " << paired.a.ppl << " vs baseline " << paired.b.ppl << " (p = "
              << s.p_value << ")\n";
    }
    write_report(c, "eval-ppl.json", rep);
    return 0;
}

// ---- history-sweep -----------------------------------------------------------

int cmd_history_sweep(Ctx& c) {
    const auto& cfg = c.cfg;
    const auto ck = load_ckpt(c, cfg.paths.checkpoint, "paths.checkpoint");
    const auto corpus = load_corpus_checked(c, cfg.paths.corpus, "paths.corpus");
    check_vocab(c, ck.vocab);
    DirLock lock(c.dir());
    const auto& mc = ck.model.config;
    const auto seqs = train::build_instances(corpus, ck.vocab, mc.block_size, cfg.sweep_ks.back(),
                                             train::InstanceKind::user_blocks, false);
    const auto rows = eval::history_sweep(ck.model, seqs, cfg.sweep_ks, cfg.eval_mode);
    write_file(c.dir() / "history_sweep.tsv", eval::sweep_table(rows));

    json rep = base_report(c);
    rep["inputs"] = {{"checkpoint", fingerprint(cfg.paths.checkpoint)},
                     {"corpus", fingerprint(cfg.paths.corpus)}};
    rep["metric"] = "perplexity";
    json jr = json::array();
    for (const auto& r : rows) {
        jr.push_back({{"k", r.k}, {"perplexity", r.result.ppl}, {"tokens", r.result.tokens}});
        c.out << "k=" << r.k << " perplexity " << r.result.ppl << "\n";
    }
    rep["rows"] = jr;
    if (rows.size() >= 2) {
        const auto a = rows.back().result.user_mean_nll();
        const auto b = rows.front().result.user_mean_nll();
        eval::Significance s{"k=" + std::to_string(rows.back().k) + " vs k=" +
                                 std::to_string(rows.front().k),
                             cfg.test, run_test(cfg, a, b), cfg.n_resamples, cfg.seed};
        rep["significance"] = json::array({significance_json(s)});
    }
    write_report(c, "history_sweep.json", rep);
    return 0;
}

// ---- task fine-tuning and evaluation ------------------------------------------

std::ofstream open_log(const Ctx& c, const std::string& name) {
    return std::ofstream(c.dir() / name, std::ios::trunc);
}

std::function<void(const finetune::FinetuneRecord&)> ft_logger(std::ofstream& log, std::ostream& out) {
    return [&log, &out](const finetune::FinetuneRecord& r) {
        log << json{{"step", r.step}, {"epoch", r.epoch}, {"train_loss", r.train_loss},
                    {"dev_loss", r.dev_loss}}.dump()
            << "\n";
        log.flush();
        out << "epoch " << r.epoch << " train_loss " << r.train_loss << " dev_loss " << r.dev_loss
            << "\n";
    };
}

std::string join(const std::vector<std::string>& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + xs[i];
    return s;
}

finetune::LabeledDocumentSet load_documents(const Ctx& c) {
    const auto history = load_corpus_checked(c, c.cfg.paths.corpus, "paths.corpus");
    require_path(c, c.cfg.paths.labels, "paths.labels");
    try {
        return finetune::make_document_set(finetune::load_labeled(c.cfg.paths.labels), history);
    } catch (const std::invalid_argument& e) {
        throw UserError(std::string("paths.labels: ") + e.what());
    }
}

finetune::LabeledUserSet load_users(const Ctx& c) {
    const auto corpus = load_corpus_checked(c, c.cfg.paths.corpus, "paths.corpus");
    require_path(c, c.cfg.paths.labels, "paths.labels");
    try {
        return finetune::make_user_set(finetune::load_labeled(c.cfg.paths.labels), corpus);
    } catch (const std::invalid_argument& e) {
        throw UserError(std::string("paths.labels: ") + e.what());
    }
}

std::vector<finetune::DocInstance> doc_instances(const finetune::LabeledDocumentSet& docs,
                                                 const train::Checkpoint& ck, std::size_t cap,
                                                 finetune::DocMode mode) {
    try {
        return finetune::build_document_instances(docs, ck.vocab, ck.model.config.block_size, cap, mode);
    } catch (const std::invalid_argument& e) {
        throw UserError(e.what());
    }
}

std::size_t eval_cap(const ExperimentConfig& cfg) {
    return cfg.history_blocks ? cfg.history_blocks : cfg.finetune.max_blocks;
}

json document_report(const Ctx& c, const finetune::TaskModel& tm,
                     const finetune::LabeledDocumentSet& docs, const train::Checkpoint& ck,
                     finetune::DocMode mode) {
    const auto test = docs.subset(c.cfg.eval_split);
    if (test.records.empty()) throw UserError("no labeled documents in split '" + c.cfg.eval_split + "'");
    const auto inst = doc_instances(test, ck, eval_cap(c.cfg), mode);
    const auto preds = finetune::predict_documents(tm, inst, mode);
    std::vector<int> pred, gold;
    std::vector<double> correct;
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < inst.size(); ++i) {
        pred.push_back(preds[i].label);
        gold.push_back(inst[i].label);
        correct.push_back(preds[i].label == inst[i].label ? 1.0 : 0.0);
        ids.push_back(test.records[i].user_id + "@" + std::to_string(test.records[i].message.timestamp));
    }
    json rep = base_report(c);
    rep["task"] = "document";
    rep["doc_mode"] = std::string(finetune::doc_mode_name(mode));
    rep["split"] = c.cfg.eval_split;
    rep["metric"] = "weighted_f1";
    rep["value"] = eval::weighted_f1(pred, gold, docs.num_classes());
    rep["accuracy"] = eval::accuracy(pred, gold);
    rep["n_classes"] = docs.num_classes();
    rep["ids"] = ids;
    rep["predictions"] = pred;
    rep["golds"] = gold;
    rep["per_instance"] = correct;
    return rep;
}

json user_report(const Ctx& c, const finetune::TaskModel& tm, const finetune::LabeledUserSet& users,
                 const train::Checkpoint& ck) {
    const auto test = users.subset(c.cfg.eval_split);
    if (test.records.size() < 2) throw UserError("need at least 2 users in split '" + c.cfg.eval_split + "'");
    const auto inst = finetune::build_user_instances(test, ck.vocab, ck.model.config.block_size,
                                                     eval_cap(c.cfg));
    const auto pred = finetune::predict_users(tm, inst);
    std::vector<double> gold, sq;
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < inst.size(); ++i) {
        gold.push_back(inst[i].target);
        sq.push_back((pred[i] - gold[i]) * (pred[i] - gold[i]));
        ids.push_back(test.records[i].user_id);
    }
    const double r = eval::pearson_r(pred, gold);
    json rep = base_report(c);
    rep["task"] = "user";
    rep["split"] = c.cfg.eval_split;
    rep["metric"] = "pearson_r";
    rep["value"] = r;
    rep["r_dis"] = eval::disattenuated_r(r, c.cfg.reliability);
    rep["reliability"] = c.cfg.reliability;
    rep["mse"] = eval::mean_squared_error(pred, gold);
    rep["ids"] = ids;
    rep["predictions"] = pred;
    rep["golds"] = gold;
    rep["per_instance"] = sq;
    return rep;
}

finetune::TaskModel task_model(const train::Checkpoint& ck) {
    if (ck.head.size() == 0) throw UserError("checkpoint has no task head; run finetune-doc or finetune-user first");
    return finetune::attach_head(ck.model, ck.head);
}

void save_task_checkpoint(const Ctx& c, const finetune::FinetuneResult& res, const train::Checkpoint& base,
                          std::map<std::string, std::string> meta, const std::string& name) {
    train::Checkpoint out;
    out.model = finetune::detach_model(res.model);
    out.head = finetune::detach_head(res.model);
    out.vocab = base.vocab;
    meta["seed"] = std::to_string(c.cfg.seed);
    meta["config_hash"] = c.cfg.hash;
    meta["version"] = std::string(version());
    meta["dev_loss"] = util::format_double(res.best_dev_loss);
    meta["instances"] = "user_blocks";
    out.meta = std::move(meta);
    train::save_checkpoint(out, c.dir() / name);
}

// Fine-tunes `start` on the document task and returns the result.
finetune::FinetuneResult run_doc_finetune(const Ctx& c, const model::Model& start,
                                          const train::Checkpoint& ck,
                                          const finetune::LabeledDocumentSet& docs,
                                          finetune::DocMode mode, const std::string& log_name) {
    const auto tr = doc_instances(docs.subset("train"), ck, c.cfg.finetune.max_blocks, mode);
    const auto dv = doc_instances(docs.subset("dev"), ck, c.cfg.finetune.max_blocks, mode);
    if (tr.empty()) throw UserError("no labeled documents in split 'train'");
    auto log = open_log(c, log_name);
    return finetune::finetune_document(start, tr, dv, docs.num_classes(), c.cfg.finetune, mode,
                                       ft_logger(log, c.out));
}

int cmd_finetune_doc(Ctx& c) {
    const auto ck = load_ckpt(c, c.cfg.paths.checkpoint, "paths.checkpoint");
    const auto docs = load_documents(c);
    DirLock lock(c.dir());
    const auto res = run_doc_finetune(c, ck.model, ck, docs, c.cfg.doc_mode, "metrics-doc.jsonl");
    save_task_checkpoint(c, res, ck,
                         {{"task", "document"},
                          {"doc_mode", std::string(finetune::doc_mode_name(c.cfg.doc_mode))},
                          {"classes", join(docs.class_names)}},
                         "ckpt-doc");
    json rep = base_report(c);
    rep["inputs"] = {{"checkpoint", fingerprint(c.cfg.paths.checkpoint)},
                     {"labels", fingerprint(c.cfg.paths.labels)}};
    rep["best_dev_loss"] = res.best_dev_loss;
    rep["steps"] = res.steps;
    write_report(c, "finetune-doc.json", rep);
    return 0;
}

int cmd_finetune_user(Ctx& c) {
    const auto ck = load_ckpt(c, c.cfg.paths.checkpoint, "paths.checkpoint");
    const auto users = load_users(c);
    DirLock lock(c.dir());
    const auto& mc = ck.model.config;
    const auto tr = finetune::build_user_instances(users.subset("train"), ck.vocab, mc.block_size,
                                                   c.cfg.finetune.max_blocks);
    const auto dv = finetune::build_user_instances(users.subset("dev"), ck.vocab, mc.block_size,
                                                   c.cfg.finetune.max_blocks);
    if (tr.empty()) throw UserError("no labeled users in split 'train'");
    auto log = open_log(c, "metrics-user.jsonl");
    const auto res = finetune::finetune_user(ck.model, tr, dv, c.cfg.finetune, c.cfg.freeze,
                                             ft_logger(log, c.out));
    save_task_checkpoint(c, res, ck,
                         {{"task", "user"}, {"freeze", std::string(finetune::freeze_name(c.cfg.freeze))}},
                         "ckpt-user");
    json rep = base_report(c);
    rep["inputs"] = {{"checkpoint", fingerprint(c.cfg.paths.checkpoint)},
                     {"labels", fingerprint(c.cfg.paths.labels)}};
    rep["best_dev_loss"] = res.best_dev_loss;
    rep["steps"] = res.steps;
    write_report(c, "finetune-user.json", rep);
    return 0;
}

int cmd_eval_task(Ctx& c) {
    const auto ck = load_ckpt(c, c.cfg.paths.checkpoint, "paths.checkpoint");
    check_vocab(c, ck.vocab);
    const std::string task = meta_or(ck, "task", "");
    json rep;
    if (task == "document") {
        const auto docs = load_documents(c);
        DirLock lock(c.dir());
        const auto classes = meta_or(ck, "classes", "");
        if (classes != join(docs.class_names)) {
            throw UserError("label set mismatch: checkpoint classes {" + classes +
                            "} vs labels file {" + join(docs.class_names) + "}");
        }
        const auto mode = finetune::parse_doc_mode(meta_or(ck, "doc_mode", "full"));
        rep = document_report(c, task_model(ck), docs, ck, mode);
        rep["inputs"] = {{"checkpoint", fingerprint(c.cfg.paths.checkpoint)},
                         {"labels", fingerprint(c.cfg.paths.labels)}};
        write_report(c, "eval-task.json", rep);
    } else if (task == "user") {
        const auto users = load_users(c);
        DirLock lock(c.dir());
        rep = user_report(c, task_model(ck), users, ck);
        rep["inputs"] = {{"checkpoint", fingerprint(c.cfg.paths.checkpoint)},
                         {"labels", fingerprint(c.cfg.paths.labels)}};
        write_report(c, "eval-task.json", rep);
    } else {
        throw UserError("checkpoint is not a fine-tuned task model (meta.task missing)");
    }
    c.out << rep["metric"].get<std::string>() << " " << rep["value"].get<double>() << "\n";
    return 0;
}

int cmd_ablate(Ctx& c) {
    const auto& v = c.cfg.variant;
    if (v.empty()) throw UserError("ablate needs config field 'eval.variant' (or --variant)");
    const auto ck = load_ckpt(c, c.cfg.paths.checkpoint, "paths.checkpoint");
    const auto docs = load_documents(c);
    DirLock lock(c.dir());
    finetune::DocMode mode = finetune::DocMode::full;
    model::Model start = ck.model;
    if (v == "no_recurrence") {
        mode = finetune::DocMode::no_recurrence;
    } else if (v == "no_history") {
        mode = finetune::DocMode::no_history;
    } else if (v == "frozen") {
        mode = finetune::DocMode::frozen_repr;
    } else {
        start = model::init_model(ck.model.config, c.cfg.seed);
    }
    const auto res = run_doc_finetune(c, start, ck, docs, mode, "metrics-ablate-" + v + ".jsonl");
    save_task_checkpoint(c, res, ck,
                         {{"task", "document"},
                          {"doc_mode", std::string(finetune::doc_mode_name(mode))},
                          {"classes", join(docs.class_names)},
                          {"variant", v}},
                         "ckpt-ablate-" + v);
    json rep = document_report(c, res.model, docs, ck, mode);
    rep["variant"] = v;
    rep["inputs"] = {{"checkpoint", fingerprint(c.cfg.paths.checkpoint)},
                     {"labels", fingerprint(c.cfg.paths.labels)}};
    write_report(c, "ablate-" + v + ".json", rep);
    c.out << "weighted_f1 " << rep["value"].get<double>() << "\n";
    return 0;
}

// ---- significance ------------------------------------------------------------

json load_report(const fs::path& p, const std::string& flag) {
    if (p.empty()) throw UserError("significance needs " + flag);
    if (!fs::exists(p)) throw UserError(flag + ": file not found: " + p.string());
    try {
        return json::parse(read_file(p));
    } catch (const json::exception& e) {
        throw UserError(flag + ": not a report: " + e.what());
    }
}

int cmd_significance(Ctx& c, const fs::path& pa, const fs::path& pb) {
    const json a = load_report(pa, "--a");
    const json b = load_report(pb, "--b");
    const auto& cfg = c.cfg;
    if (!a.contains("per_instance") || !b.contains("per_instance")) {
        throw UserError("significance: both reports need per-instance scores");
    }
    if (a.value("metric", "") != b.value("metric", "")) {
        throw UserError("significance: reports measure different metrics");
    }
    DirLock lock(c.dir());
    json rep = base_report(c);
    rep["metric"] = a.value("metric", "");
    double p = 1.0;
    double observed = 0.0;
    if (a.value("metric", "") == "weighted_f1") {
        const auto pa_ = a["predictions"].get<std::vector<int>>();
        const auto pb_ = b["predictions"].get<std::vector<int>>();
        const auto gold = a["golds"].get<std::vector<int>>();
        if (b["golds"].get<std::vector<int>>() != gold || a["ids"] != b["ids"]) {
            throw UserError("significance: reports cover different instances");
        }
        const std::size_t k = a["n_classes"].get<std::size_t>();
        auto f1 = [k](std::span<const int> pr, std::span<const int> g) { return eval::weighted_f1(pr, g, k); };
        observed = f1(pa_, gold) - f1(pb_, gold);
        if (cfg.test == "bootstrap") {
            std::vector<int> ra, rb, rg;
            p = eval::bootstrap_test(
                gold.size(),
                [&](std::span<const std::size_t> idx) {
                    ra.clear(); rb.clear(); rg.clear();
                    for (auto i : idx) {
                        ra.push_back(pa_[i]);
                        rb.push_back(pb_[i]);
                        rg.push_back(gold[i]);
                    }
                    return f1(ra, rg) - f1(rb, rg);
                },
                cfg.n_resamples, cfg.seed);
        } else {
            p = eval::permutation_test_labels(pa_, pb_, gold, f1, cfg.n_resamples, cfg.seed);
        }
    } else {
        const auto sa = a["per_instance"].get<std::vector<double>>();
        const auto sb = b["per_instance"].get<std::vector<double>>();
        if (sa.size() != sb.size() || (a.contains("ids") && a["ids"] != b["ids"]) ||
            (a.contains("users") && a["users"] != b["users"])) {
            throw UserError("significance: reports cover different instances");
        }
        for (std::size_t i = 0; i < sa.size(); ++i) observed += (sa[i] - sb[i]) / static_cast<double>(sa.size());
        p = run_test(cfg, sa, sb);
    }
    rep["inputs"] = {{"a", fingerprint(pa)}, {"b", fingerprint(pb)}};
    rep["observed_difference"] = observed;
    rep["value"] = p;
    rep["significance"] = json::array({significance_json({"a vs b", cfg.test, p, cfg.n_resamples, cfg.seed})});
    write_report(c, "significance.json", rep);
    c.out << cfg.test << " test p = " << p << " (difference " << observed << ")\n";
    return 0;
}

struct CommonFlags {
    std::string config;
    std::vector<std::string> sets;
    std::string out, checkpoint, corpus, vocab, labels, train, dev, baseline, variant;
    std::string seed;
    std::string a, b;
};

void add_common(CLI::App* sub, CommonFlags& f) {
    sub->add_option("--config", f.config, "experiment config file")->check(CLI::ExistingFile);
    sub->add_option("--set", f.sets, "override a config field, key=value (repeatable)");
    sub->add_option("--out", f.out, "output directory (out_dir)");
    sub->add_option("--seed", f.seed, "seed");
    sub->add_option("--checkpoint", f.checkpoint, "paths.checkpoint");
    sub->add_option("--corpus", f.corpus, "paths.corpus");
    sub->add_option("--vocab", f.vocab, "paths.vocab");
    sub->add_option("--labels", f.labels, "paths.labels");
    sub->add_option("--train", f.train, "paths.train");
    sub->add_option("--dev", f.dev, "paths.dev");
    sub->add_option("--baseline", f.baseline, "paths.baseline");
}

std::vector<std::string> flag_overrides(const CommonFlags& f) {
    std::vector<std::string> o = f.sets;
    auto put = [&](const std::string& key, const std::string& v) {
        if (!v.empty()) o.push_back(key + "=" + v);
    };
    put("out_dir", f.out);
    put("seed", f.seed);
    put("paths.checkpoint", f.checkpoint);
    put("paths.corpus", f.corpus);
    put("paths.vocab", f.vocab);
    put("paths.labels", f.labels);
    put("paths.train", f.train);
    put("paths.dev", f.dev);
    put("paths.baseline", f.baseline);
    put("eval.variant", f.variant);
    return o;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Human-aware recurrent transformer: data, training and evaluation"};
    app.set_version_flag("--version", std::string(version()));
    app.require_subcommand(1);
    CommonFlags f;
    const std::vector<std::pair<std::string, std::string>> cmds = {
        {"gen-data", "generate a synthetic corpus (and task labels)"},
        {"split", "split a corpus into train/dev/test users"},
        {"pretrain", "pre-train on the HuLM objective"},
        {"eval-ppl", "perplexity of a checkpoint on a corpus"},
        {"history-sweep", "perplexity as a function of history blocks"},
        {"finetune-doc", "fine-tune for document classification"},
        {"finetune-user", "fine-tune for user-level regression"},
        {"eval-task", "evaluate a fine-tuned task checkpoint"},
        {"ablate", "fine-tune and evaluate an ablated document model"},
        {"significance", "paired significance test between two reports"},
    };
    for (const auto& [name, desc] : cmds) {
        auto* sub = app.add_subcommand(name, desc);
        add_common(sub, f);
        if (name == "ablate") {
            sub->add_option("--variant", f.variant, "no_recurrence | not_pretrained | no_history | frozen");
        }
        if (name == "significance") {
            sub->add_option("--a", f.a, "report A");
            sub->add_option("--b", f.b, "report B");
        }
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        std::optional<fs::path> file;
        if (!f.config.empty()) file = f.config;
        Ctx c{load_experiment(file, flag_overrides(f)), out, command};
        if (command == "gen-data") return cmd_gen_data(c);
        if (command == "split") return cmd_split(c);
        if (command == "pretrain") return cmd_pretrain(c);
        if (command == "eval-ppl") return cmd_eval_ppl(c);
        if (command == "history-sweep") return cmd_history_sweep(c);
        if (command == "finetune-doc") return cmd_finetune_doc(c);
        if (command == "finetune-user") return cmd_finetune_user(c);
        if (command == "eval-task") return cmd_eval_task(c);
        if (command == "ablate") return cmd_ablate(c);
        if (command == "significance") return cmd_significance(c, f.a, f.b);
        err << "error: unhandled subcommand " << command << "\n";
        return 2;
    } catch (const UserError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const corpus::FormatError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const train::TrainingDiverged& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return 2;
    }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv{"hart"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace hart::cli
