#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <unistd.h>

#include "criteria.hpp"
#include "hart/cli/app.hpp"
#include "hart/corpus/split.hpp"
#include "hart/corpus/synthetic.hpp"
#include "hart/eval/metrics.hpp"
#include "hart/eval/perplexity.hpp"
#include "hart/eval/significance.hpp"
#include "hart/finetune/finetune.hpp"
#include "hart/finetune/tasks.hpp"
#include "hart/train/pretrain.hpp"

namespace hart::acceptance {
namespace {

namespace fs = std::filesystem;

std::string fmt(const char* f, auto... args) {
    char buf[1024];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

void progress(const std::string& what) {
    std::fprintf(stderr, "  .. %s\n", what.c_str());
}

model::ModelConfig lm_model(std::size_t vocab) {
    model::ModelConfig c;
    c.vocab_size = vocab;
    c.d_model = 32;
    c.n_layers = 2;
    c.n_heads = 2;
    c.block_size = 16;
    c.max_blocks = 16;
    c.dropout = 0.0;
    c.set_default_layers();
    return c;
}

train::TrainConfig lm_training(model::RecurrenceMode mode) {
    train::TrainConfig t;
    t.optim.lr = 3e-3;
    t.batch_size = 1;
    t.epochs = 20;
    t.patience = 20;  // every run sees the full epoch budget; the best dev epoch is kept
    t.seed = 1;
    t.mode = mode;
    return t;
}

// Criterion-4 corpus: users share one of ten latent styles, each a 20-word
// preferred subvocabulary. bias == 20 / 200 gives the zero-signal control.
corpus::SyntheticConfig lm_corpus(double bias) {
    corpus::SyntheticConfig c;
    c.n_users = 200;
    c.vocab_size = 200;
    c.subvocab_size = 20;
    c.bias = bias;
    c.n_styles = 10;
    c.seed = 1;
    return c;
}

struct LmExperiment {
    corpus::Vocabulary vocab;
    model::Model hart;
    model::Model baseline;
    std::vector<corpus::BlockSequence> test_blocks;    // user streams
    std::vector<corpus::BlockSequence> test_messages;  // per-message instances
};

LmExperiment run_lm(double bias) {
    const auto data = corpus::generate_synthetic_corpus(lm_corpus(bias));
    corpus::SplitFractions fr;
    fr.dev_unseen = 0.1;
    fr.test_unseen = 0.2;
    const auto s = corpus::split_users(data.corpus, fr, 1);
    LmExperiment e;
    e.vocab = corpus::Vocabulary::build(s.train);
    const auto mc = lm_model(e.vocab.size());
    auto build = [&](const corpus::UserCorpus& c, train::InstanceKind kind) {
        return train::build_instances(c, e.vocab, mc.block_size, mc.max_blocks, kind, false);
    };
    using K = train::InstanceKind;
    progress(fmt("bias %.2f: pretraining HaRT", bias));
    e.hart = train::pretrain(model::init_model(mc, 1), lm_training(model::RecurrenceMode::full),
                             build(s.train, K::user_blocks), build(s.dev_unseen, K::user_blocks))
                 .model;
    progress(fmt("bias %.2f: pretraining the no-history baseline", bias));
    e.baseline = train::pretrain(model::init_model(mc, 1), lm_training(model::RecurrenceMode::no_history),
                                 build(s.train, K::per_message), build(s.dev_unseen, K::per_message))
                     .model;
    e.test_blocks = build(s.test_unseen, K::user_blocks);
    e.test_messages = build(s.test_unseen, K::per_message);
    return e;
}

// Shared between criteria 4 and 5.
const LmExperiment& biased_lm() {
    static const LmExperiment e = run_lm(0.85);
    return e;
}

struct Paired {
    eval::PairedPerplexity words;
    eval::PairedPerplexity joint;
    double ratio() const { return words.a.ppl / words.b.ppl; }
};

Paired compare_k4(const LmExperiment& e) {
    std::vector<corpus::BlockSequence> k4;
    for (const auto& seq : e.test_blocks) k4.push_back(eval::cap_blocks(seq, 4));
    auto run = [&](eval::PairedScoring sc) {
        return eval::compare_perplexity(e.hart, k4, model::RecurrenceMode::full, e.baseline,
                                        e.test_messages, model::RecurrenceMode::no_history, sc);
    };
    return {run(eval::PairedScoring::word_conditional), run(eval::PairedScoring::joint)};
}

}  // namespace

Outcome directional_perplexity() {
    const auto biased = compare_k4(biased_lm());
    const auto control = compare_k4(run_lm(0.1));
    const double gain = 1.0 - biased.ratio();
    const double gap = control.ratio() - 1.0;
    const bool ok = gain >= 0.10 && std::abs(gap) <= 0.02;
    return {ok, fmt("biased corpus: HaRT k=4 ppl %.2f vs no-history %.2f (%.1f%% lower, need >= 10%%); "
                    "control: %.2f vs %.2f (gap %+.2f%%, need within 2%%); %zu paired word tokens; "
                    "joint-probability readings %.2f/%.2f and %.2f/%.2f",
                    biased.words.a.ppl, biased.words.b.ppl, 100 * gain, control.words.a.ppl,
                    control.words.b.ppl, 100 * gap, biased.words.a.tokens, biased.joint.a.ppl,
                    biased.joint.b.ppl, control.joint.a.ppl, control.joint.b.ppl)};
}

Outcome history_trend() {
    const auto& e = biased_lm();
    const std::vector<std::size_t> ks{1, 2, 4};
    const auto rows = eval::history_sweep(e.hart, e.test_blocks, ks);
    const double p1 = rows[0].result.ppl, p2 = rows[1].result.ppl, p4 = rows[2].result.ppl;
    const bool monotone = p2 <= p1 && p4 <= p2;
    const double d12 = p1 - p2, d24 = p2 - p4;
    const bool trend = d24 < d12 || (d12 > 0 && d24 > 0);
    const double p = eval::permutation_test(rows[2].result.user_mean_nll(),
                                            rows[0].result.user_mean_nll(), 10000, 1);
    const bool ok = monotone && trend && p < 0.05;
    return {ok, fmt("ppl k=1 %.3f, k=2 %.3f, k=4 %.3f (drops %.3f then %.3f) over %zu users and %zu "
                    "tokens; permutation p(k=4 vs k=1) = %.4g (need < .05)",
                    p1, p2, p4, d12, d24, rows[0].result.users.size(), rows[0].result.tokens, p)};
}

namespace {

finetune::DocumentTaskConfig doc_task() {
    finetune::DocumentTaskConfig c;
    c.history.n_users = 300;
    c.history.vocab_size = 200;
    c.history.subvocab_size = 20;
    c.history.bias = 0.85;
    c.history.n_styles = 4;
    c.history.messages_min = 8;
    c.history.messages_max = 12;
    c.history.seed = 3;
    c.docs_per_user = 5;
    c.labeled_bias = 0.3;
    c.dev_fraction = 0.15;
    c.test_fraction = 0.35;
    return c;
}

finetune::FinetuneConfig doc_finetuning() {
    finetune::FinetuneConfig f;
    f.optim.lr = 3e-3;
    f.batch_size = 8;
    f.epochs = 10;
    f.patience = 10;
    f.seed = 1;
    f.max_blocks = 12;
    return f;
}

// Users of one labeled split, for pretraining on their unlabeled history.
corpus::UserCorpus users_in_split(const corpus::UserCorpus& all,
                                  const std::vector<finetune::LabeledLine>& labels,
                                  const std::string& split) {
    std::set<std::string> keep;
    for (const auto& l : labels) {
        if (l.split == split) keep.insert(l.user_id);
    }
    corpus::UserCorpus out;
    for (const auto& u : all.users()) {
        if (keep.count(u.user_id)) out.add_user(u);
    }
    return out;
}

}  // namespace

Outcome recurrence_ablation() {
    const auto task = finetune::generate_document_task(doc_task());
    const auto docs = finetune::make_document_set(task.labels, task.data.corpus);
    const auto train_users = users_in_split(task.data.corpus, task.labels, "train");
    const auto dev_users = users_in_split(task.data.corpus, task.labels, "dev");
    const auto vocab = corpus::Vocabulary::build(task.data.corpus);
    const auto mc = lm_model(vocab.size());
    auto blocks = [&](const corpus::UserCorpus& c) {
        return train::build_instances(c, vocab, mc.block_size, mc.max_blocks,
                                      train::InstanceKind::user_blocks, false);
    };
    const auto ft = doc_finetuning();

    struct Arm {
        model::RecurrenceMode pretrain_mode;
        finetune::DocMode doc_mode;
        std::vector<int> pred;
    };
    Arm full{model::RecurrenceMode::full, finetune::DocMode::full, {}};
    Arm norec{model::RecurrenceMode::no_recurrence, finetune::DocMode::no_recurrence, {}};
    std::vector<int> gold;
    for (Arm* arm : {&full, &norec}) {
        const std::string name(model::mode_name(arm->pretrain_mode));
        progress("document task: pretraining " + name);
        auto tc = lm_training(arm->pretrain_mode);
        tc.epochs = 10;
        tc.patience = 10;
        const auto pre = train::pretrain(model::init_model(mc, 1), tc, blocks(train_users), blocks(dev_users)).model;
        auto inst = [&](const char* split) {
            return finetune::build_document_instances(docs.subset(split), vocab, mc.block_size,
                                                      ft.max_blocks, arm->doc_mode);
        };
        progress("document task: fine-tuning " + name);
        const auto res = finetune::finetune_document(pre, inst("train"), inst("dev"),
                                                     docs.num_classes(), ft, arm->doc_mode);
        const auto test = inst("test");
        for (const auto& p : finetune::predict_documents(res.model, test, arm->doc_mode)) {
            arm->pred.push_back(p.label);
        }
        gold.clear();
        for (const auto& d : test) gold.push_back(d.label);
    }
    const int k = static_cast<int>(docs.num_classes());
    auto f1 = [k](std::span<const int> p, std::span<const int> g) { return eval::weighted_f1(p, g, k); };
    const double fa = f1(full.pred, gold), fb = f1(norec.pred, gold);
    const double p = eval::permutation_test_labels(full.pred, norec.pred, gold, f1, 10000, 1);
    const bool ok = gold.size() >= 500 && fa > fb && p < 0.05;
    return {ok, fmt("weighted F1 full %.4f vs no_recurrence %.4f on %zu test documents (%d classes), "
                    "permutation p = %.4g (need >= 500 documents, full higher, p < .05)",
                    fa, fb, gold.size(), k, p)};
}

Outcome user_pipeline() {
    finetune::UserTaskConfig ut;
    ut.corpus.n_users = 200;
    ut.corpus.vocab_size = 200;
    ut.corpus.subvocab_size = 20;
    ut.corpus.n_styles = 1;
    ut.corpus.bias = 0.3;
    ut.corpus.bias_max = 0.9;
    ut.corpus.seed = 4;
    ut.dev_fraction = 0.15;
    ut.test_fraction = 0.25;
    const auto task = finetune::generate_user_task(ut);
    const auto users = finetune::make_user_set(task.labels, task.data.corpus);
    const auto vocab = corpus::Vocabulary::build(task.data.corpus);
    const auto mc = lm_model(vocab.size());
    auto blocks = [&](const corpus::UserCorpus& c) {
        return train::build_instances(c, vocab, mc.block_size, mc.max_blocks,
                                      train::InstanceKind::user_blocks, false);
    };
    progress("user task: pretraining");
    auto tc = lm_training(model::RecurrenceMode::full);
    tc.epochs = 10;
    tc.patience = 10;
    const auto pre = train::pretrain(model::init_model(mc, 1), tc,
                                     blocks(users_in_split(task.data.corpus, task.labels, "train")),
                                     blocks(users_in_split(task.data.corpus, task.labels, "dev")))
                         .model;
    finetune::FinetuneConfig fc;
    fc.optim.lr = 1e-2;
    fc.batch_size = 4;
    fc.epochs = 30;
    fc.patience = 30;
    fc.seed = 1;
    fc.max_blocks = 8;
    auto inst = [&](const char* split) {
        return finetune::build_user_instances(users.subset(split), vocab, mc.block_size, fc.max_blocks);
    };
    progress("user task: fine-tuning recurrence_only");
    const auto res = finetune::finetune_user(pre, inst("train"), inst("dev"), fc,
                                             finetune::FreezePolicy::recurrence_only);
    const auto test = inst("test");
    const auto pred = finetune::predict_users(res.model, test);
    std::vector<double> gold;
    for (const auto& u : test) gold.push_back(u.target);
    const double r = eval::pearson_r(pred, gold);

    const auto tuned = finetune::detach_model(res.model);
    std::set<std::size_t> trainable;
    for (auto id : pre.recurrence_param_ids()) trainable.insert(id.index);
    std::size_t frozen = 0, frozen_changed = 0, tuned_changed = 0;
    for (auto id : pre.params.ids()) {
        const bool same = pre.params.value(id) == tuned.params.value(id);
        if (trainable.count(id.index)) {
            tuned_changed += !same;
        } else {
            ++frozen;
            frozen_changed += !same;
        }
    }
    const bool ok = r > 0.9 && frozen_changed == 0;
    return {ok, fmt("held-out Pearson r %.4f over %zu users (need > 0.9); %zu of %zu frozen tensors "
                    "changed, %zu of %zu recurrence tensors updated",
                    r, gold.size(), frozen_changed, frozen, tuned_changed, trainable.size())};
}

namespace {

const char* kCliExperiment =
    "seed = 11\n"
    "[data]\n"
    "n_users = 24\nmessages_min = 4\nmessages_max = 8\nvocab_size = 40\nsubvocab_size = 6\n"
    "n_styles = 3\nbias_max = 0.9\ndocs_per_user = 2\n"
    "[split]\n"
    "dev_unseen = 0.2\ntest_unseen = 0.2\n"
    "[model]\n"
    "d_model = 8\nn_layers = 2\nn_heads = 2\nblock_size = 8\nmax_blocks = 4\n"
    "[train]\n"
    "epochs = 2\nbatch_size = 4\nlr = 0.01\n"
    "[finetune]\n"
    "epochs = 2\nbatch_size = 4\nlr = 0.01\nmax_blocks = 12\n"
    "[eval]\n"
    "n_resamples = 500\nks = 1,2\n";

// Runs every subcommand into `root`; returns an error message or nothing.
std::optional<std::string> run_all(const fs::path& root, const fs::path& conf) {
    auto run = [&](std::vector<std::string> args) -> std::optional<std::string> {
        args.insert(args.begin() + 1, {"--config", conf.string()});
        for (auto& a : args) {
            if (a.rfind("@", 0) == 0) a = (root / a.substr(1)).string();
        }
        std::ostringstream out, err;
        if (cli::run(args, out, err) != 0) return args[0] + ": " + err.str();
        return std::nullopt;
    };
    const std::vector<std::vector<std::string>> steps = {
        {"gen-data", "--out", "@lm"},
        {"split", "--out", "@split", "--corpus", "@lm/corpus.tsv"},
        {"pretrain", "--out", "@pt", "--train", "@split/train.tsv", "--dev", "@split/dev.tsv"},
        {"pretrain", "--out", "@pm", "--train", "@split/train.tsv", "--dev", "@split/dev.tsv", "--set",
         "train.instances=per_message", "--set", "train.mode=no_history"},
        {"eval-ppl", "--out", "@ev", "--checkpoint", "@pt/ckpt", "--corpus", "@split/test.tsv",
         "--baseline", "@pm/ckpt", "--set", "eval.history_blocks=4"},
        {"history-sweep", "--out", "@sw", "--checkpoint", "@pt/ckpt", "--corpus", "@split/test.tsv"},
        {"gen-data", "--out", "@doc", "--set", "data.task=document"},
        {"pretrain", "--out", "@dpt", "--train", "@doc/corpus.tsv"},
        {"finetune-doc", "--out", "@dft", "--checkpoint", "@dpt/ckpt", "--corpus", "@doc/corpus.tsv",
         "--labels", "@doc/labels.tsv"},
        {"eval-task", "--out", "@dev", "--checkpoint", "@dft/ckpt-doc", "--corpus", "@doc/corpus.tsv",
         "--labels", "@doc/labels.tsv"},
        {"ablate", "--out", "@dab", "--checkpoint", "@dpt/ckpt", "--corpus", "@doc/corpus.tsv",
         "--labels", "@doc/labels.tsv", "--variant", "no_recurrence"},
        {"significance", "--out", "@sig", "--a", "@dev/eval-task.json", "--b",
         "@dab/ablate-no_recurrence.json"},
        {"gen-data", "--out", "@user", "--set", "data.task=user", "--set", "data.n_styles=1"},
        {"pretrain", "--out", "@upt", "--train", "@user/corpus.tsv"},
        {"finetune-user", "--out", "@uft", "--checkpoint", "@upt/ckpt", "--corpus", "@user/corpus.tsv",
         "--labels", "@user/labels.tsv"},
        {"eval-task", "--out", "@uev", "--checkpoint", "@uft/ckpt-user", "--corpus", "@user/corpus.tsv",
         "--labels", "@user/labels.tsv"},
    };
    for (const auto& s : steps) {
        if (auto e = run(s)) return e;
    }
    return std::nullopt;
}

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        std::ifstream in(entry.path(), std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        out[fs::relative(entry.path(), root).string()] = ss.str();
    }
    return out;
}

}  // namespace

Outcome determinism() {
    const fs::path base = fs::temp_directory_path() / ("hart-acceptance-" + std::to_string(::getpid()));
    fs::remove_all(base);
    fs::create_directories(base);
    const fs::path conf = base / "experiment.conf";
    std::ofstream(conf) << kCliExperiment;
    for (const char* run : {"a", "b"}) {
        if (auto e = run_all(base / run, conf)) {
            fs::remove_all(base);
            return {false, "run " + std::string(run) + " failed: " + *e};
        }
    }
    const auto a = tree(base / "a");
    const auto b = tree(base / "b");
    std::size_t differing = 0;
    std::string first;
    for (const auto& [name, content] : a) {
        const auto it = b.find(name);
        if (it == b.end() || it->second != content) {
            if (!differing++) first = name;
        }
    }
    const bool ok = a.size() == b.size() && differing == 0 && !a.empty();
    fs::remove_all(base);
    return {ok, fmt("16 subcommand runs twice: %zu output files, %zu differ%s%s", a.size(), differing,
                    differing ? ", first: " : "", first.c_str())};
}

}  // namespace hart::acceptance
