#include <gtest/gtest.h>

#include <json.hpp>
#include <sstream>

#include "fixtures.hpp"
#include "hart/cli/app.hpp"
#include "hart/cli/config.hpp"
#include "hart/corpus/vocabulary.hpp"

namespace hart::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct Result {
    int code;
    std::string out, err;
};

Result cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run(args, out, err);
    return {code, out.str(), err.str()};
}

const char* kSmall =
    "seed = 5\n"
    "[data]\n"
    "n_users = 14\nmessages_min = 3\nmessages_max = 5\ntokens_min = 3\ntokens_max = 6\n"
    "vocab_size = 30\nsubvocab_size = 5\nbias = 0.8\n"
    "[split]\n"
    "dev_unseen = 0.2\ntest_unseen = 0.2\n"
    "[model]\n"
    "d_model = 8\nn_layers = 2\nn_heads = 2\nblock_size = 8\nmax_blocks = 3\n"
    "[train]\n"
    "epochs = 2\nbatch_size = 4\nlr = 0.01\n"
    "[finetune]\n"
    "epochs = 2\nbatch_size = 4\nlr = 0.01\nmax_blocks = 3\n"
    "[eval]\n"
    "n_resamples = 200\nks = 1,2\n";

json report(const fs::path& p) { return json::parse(testing::read_file(p)); }

void expect_provenance(const json& j) {
    EXPECT_TRUE(j.contains("config_hash"));
    EXPECT_EQ(j.at("seed").get<std::uint64_t>(), 5u);
    EXPECT_EQ(j.at("version").get<std::string>(), std::string(version()));
}

class CliTest : public ::testing::Test {
protected:
    testing::TempDir dir;
    fs::path cfg() {
        const auto p = dir / "exp.conf";
        if (!fs::exists(p)) testing::write_file(p, kSmall);
        return p;
    }
    Result go(const std::string& cmd, const std::string& out, std::vector<std::string> extra = {}) {
        std::vector<std::string> a{cmd, "--config", cfg().string(), "--out", (dir / out).string()};
        a.insert(a.end(), extra.begin(), extra.end());
        return cli(a);
    }
    void pipeline() {
        ASSERT_EQ(go("gen-data", "data").code, 0);
        ASSERT_EQ(go("split", "split", {"--corpus", (dir / "data/corpus.tsv").string()}).code, 0);
        const auto r = go("pretrain", "pt",
                          {"--train", (dir / "split/train.tsv").string(), "--dev",
                           (dir / "split/dev.tsv").string()});
        ASSERT_EQ(r.code, 0) << r.err;
    }
};

TEST_F(CliTest, GenDataIsByteIdentical) {
    ASSERT_EQ(go("gen-data", "a").code, 0);
    ASSERT_EQ(go("gen-data", "b").code, 0);
    for (const char* f : {"corpus.tsv", "latents.tsv", "gen-data.json"}) {
        EXPECT_EQ(testing::read_file(dir / "a" / f), testing::read_file(dir / "b" / f)) << f;
    }
    const auto other = go("gen-data", "c", {"--seed", "6"});
    ASSERT_EQ(other.code, 0);
    EXPECT_NE(testing::read_file(dir / "a/corpus.tsv"), testing::read_file(dir / "c/corpus.tsv"));
    expect_provenance(report(dir / "a/gen-data.json"));
}

TEST_F(CliTest, PretrainThenEvalPpl) {
    pipeline();
    EXPECT_TRUE(fs::exists(dir / "pt/ckpt"));
    EXPECT_TRUE(fs::exists(dir / "pt/metrics.jsonl"));
    expect_provenance(report(dir / "pt/pretrain.json"));
    // Every metrics line is a record with the expected fields.
    std::istringstream lines(testing::read_file(dir / "pt/metrics.jsonl"));
    std::string line;
    int n = 0;
    while (std::getline(lines, line)) {
        const auto rec = json::parse(line);
        for (const char* k : {"step", "epoch", "train_nll", "dev_nll", "ppl"}) EXPECT_TRUE(rec.contains(k));
        ++n;
    }
    EXPECT_GE(n, 1);

    const auto r = go("eval-ppl", "ev",
                      {"--checkpoint", (dir / "pt/ckpt").string(), "--corpus",
                       (dir / "split/test.tsv").string(), "--vocab", (dir / "pt/vocab.txt").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = report(dir / "ev/eval-ppl.json");
    expect_provenance(j);
    EXPECT_EQ(j.at("metric"), "perplexity");
    EXPECT_GT(j.at("value").get<double>(), 1.0);
    EXPECT_LT(j.at("value").get<double>(), 100.0);
    EXPECT_FALSE(fs::exists(dir / "ev/.lock"));

    // Paired against itself: both scorings agree between the two sides.
    const auto pr = go("eval-ppl", "ev2",
                       {"--checkpoint", (dir / "pt/ckpt").string(), "--corpus",
                        (dir / "split/test.tsv").string(), "--baseline", (dir / "pt/ckpt").string()});
    ASSERT_EQ(pr.code, 0) << pr.err;
    const auto paired = report(dir / "ev2/eval-ppl.json").at("paired");
    EXPECT_EQ(paired.at("scoring"), "word_conditional");
    EXPECT_EQ(paired.at("adjusted_perplexity").get<double>(), 1.0);
    EXPECT_EQ(paired.at("joint").at("ppl_model"), paired.at("joint").at("ppl_baseline"));
    EXPECT_LT(paired.at("word_conditional").at("ppl_model").get<double>(),
              paired.at("joint").at("ppl_model").get<double>());

    const auto s = go("history-sweep", "sw",
                      {"--checkpoint", (dir / "pt/ckpt").string(), "--corpus",
                       (dir / "split/test.tsv").string()});
    ASSERT_EQ(s.code, 0) << s.err;
    const auto sj = report(dir / "sw/history_sweep.json");
    expect_provenance(sj);
    EXPECT_EQ(sj.at("rows").size(), 2u);
    EXPECT_TRUE(fs::exists(dir / "sw/history_sweep.tsv"));
}

TEST_F(CliTest, PretrainAndEvalAreReproducible) {
    pipeline();
    const auto again = go("pretrain", "pt2",
                          {"--train", (dir / "split/train.tsv").string(), "--dev",
                           (dir / "split/dev.tsv").string()});
    ASSERT_EQ(again.code, 0);
    EXPECT_EQ(testing::read_file(dir / "pt/ckpt"), testing::read_file(dir / "pt2/ckpt"));
    EXPECT_EQ(testing::read_file(dir / "pt/metrics.jsonl"), testing::read_file(dir / "pt2/metrics.jsonl"));
    for (const char* out : {"e1", "e2"}) {
        ASSERT_EQ(go("eval-ppl", out,
                     {"--checkpoint", (dir / "pt/ckpt").string(), "--corpus",
                      (dir / "split/test.tsv").string()})
                      .code,
                  0);
    }
    EXPECT_EQ(testing::read_file(dir / "e1/eval-ppl.json"), testing::read_file(dir / "e2/eval-ppl.json"));
}

TEST_F(CliTest, VocabMismatchIsReported) {
    pipeline();
    auto toks = corpus::Vocabulary::load(dir / "pt/vocab.txt").tokens();
    toks.pop_back();
    corpus::Vocabulary(toks).save(dir / "other_vocab.txt");
    const auto r = go("eval-ppl", "ev",
                      {"--checkpoint", (dir / "pt/ckpt").string(), "--corpus",
                       (dir / "split/test.tsv").string(), "--vocab", (dir / "other_vocab.txt").string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("vocabulary mismatch"), std::string::npos) << r.err;
}

TEST_F(CliTest, UserErrorsExitOne) {
    auto r = cli({"gen-data", "--no-such-flag"});
    EXPECT_EQ(r.code, 1);
    r = go("gen-data", "x", {"--set", "model.bogus=3"});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("model.bogus"), std::string::npos) << r.err;
    r = go("gen-data", "x", {"--set", "train.lr=fast"});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("train.lr"), std::string::npos) << r.err;
    r = go("eval-ppl", "x", {"--checkpoint", (dir / "missing").string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("paths.checkpoint"), std::string::npos) << r.err;
    r = cli({"pretrain", "--config", (dir / "nope.conf").string()});
    EXPECT_EQ(r.code, 1);
    r = cli({});
    EXPECT_EQ(r.code, 1);
}

TEST_F(CliTest, CorruptCheckpointIsUserError) {
    testing::write_file(dir / "bad.ckpt", "not a checkpoint at all");
    testing::write_file(dir / "c.tsv", "u1\t1\thello\n");
    const auto r = go("eval-ppl", "x", {"--checkpoint", (dir / "bad.ckpt").string(), "--corpus",
                                        (dir / "c.tsv").string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("magic"), std::string::npos) << r.err;
}

TEST_F(CliTest, LockFileBlocksConcurrentWriter) {
    fs::create_directories(dir / "locked");
    testing::write_file(dir / "locked/.lock", "12345\n");
    const auto r = go("gen-data", "locked");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("locked"), std::string::npos);
    EXPECT_FALSE(fs::exists(dir / "locked/corpus.tsv"));
    fs::remove(dir / "locked/.lock");
    EXPECT_EQ(go("gen-data", "locked").code, 0);
    EXPECT_FALSE(fs::exists(dir / "locked/.lock"));
}

TEST_F(CliTest, DocumentTaskEndToEnd) {
    const std::vector<std::string> doc{"--set", "data.task=document", "--set", "data.docs_per_user=2",
                                 "--set", "data.n_styles=2"};
    ASSERT_EQ(go("gen-data", "doc", doc).code, 0);
    ASSERT_EQ(go("pretrain", "pt", {"--train", (dir / "doc/corpus.tsv").string()}).code, 0);
    // Documents carry their full history, which needs more blocks than the default cap.
    const std::vector<std::string> in{"--corpus", (dir / "doc/corpus.tsv").string(), "--labels",
                                      (dir / "doc/labels.tsv").string(), "--set",
                                      "finetune.max_blocks=12"};
    auto with = [&](std::vector<std::string> a) {
        a.insert(a.end(), in.begin(), in.end());
        return a;
    };
    auto r = go("finetune-doc", "ft", with({"--checkpoint", (dir / "pt/ckpt").string()}));
    ASSERT_EQ(r.code, 0) << r.err;
    r = go("eval-task", "ev", with({"--checkpoint", (dir / "ft/ckpt-doc").string()}));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = report(dir / "ev/eval-task.json");
    expect_provenance(j);
    EXPECT_EQ(j.at("metric"), "weighted_f1");
    r = go("ablate", "ab", with({"--checkpoint", (dir / "pt/ckpt").string(), "--variant", "no_history"}));
    ASSERT_EQ(r.code, 0) << r.err;
    r = go("significance", "sig",
           {"--a", (dir / "ev/eval-task.json").string(), "--b", (dir / "ab/ablate-no_history.json").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto s = report(dir / "sig/significance.json");
    expect_provenance(s);
    EXPECT_GE(s.at("value").get<double>(), 0.0);
    EXPECT_LE(s.at("value").get<double>(), 1.0);

    // A pretrained checkpoint has no head to evaluate.
    r = go("eval-task", "ev2", with({"--checkpoint", (dir / "pt/ckpt").string()}));
    EXPECT_EQ(r.code, 1);
}

TEST_F(CliTest, UserTaskEndToEnd) {
    ASSERT_EQ(go("gen-data", "u", {"--set", "data.task=user", "--set", "data.bias_max=0.9"}).code, 0);
    ASSERT_EQ(go("pretrain", "pt", {"--train", (dir / "u/corpus.tsv").string()}).code, 0);
    const std::vector<std::string> in{"--corpus", (dir / "u/corpus.tsv").string(), "--labels",
                                      (dir / "u/labels.tsv").string()};
    std::vector<std::string> a{"--checkpoint", (dir / "pt/ckpt").string()};
    a.insert(a.end(), in.begin(), in.end());
    auto r = go("finetune-user", "ft", a);
    ASSERT_EQ(r.code, 0) << r.err;
    a[1] = (dir / "ft/ckpt-user").string();
    r = go("eval-task", "ev", a);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = report(dir / "ev/eval-task.json");
    expect_provenance(j);
    EXPECT_EQ(j.at("metric"), "pearson_r");
    EXPECT_TRUE(j.contains("r_dis"));
}

TEST(CliConfig, ParsesSectionsCommentsAndQuotes) {
    const auto v = parse_config_text("# top\nseed = 3\n[model]\nd_model = 16  # width\nname = \"a # b\"\n");
    EXPECT_EQ(v.at("seed"), "3");
    EXPECT_EQ(v.at("model.d_model"), "16");
    EXPECT_EQ(v.at("model.name"), "a # b");
    EXPECT_THROW(parse_config_text("[model\n"), UserError);
    EXPECT_THROW(parse_config_text("seed 3\n"), UserError);
    EXPECT_THROW(parse_config_text("a=1\na=2\n"), UserError);
}

TEST(CliConfig, OverridesAndValidation) {
    const auto c = load_experiment(std::nullopt, {"model.n_layers=12", "train.lr=0.5"});
    EXPECT_EQ(c.model.insert_layer, 2u);
    EXPECT_EQ(c.model.extract_layer, 11u);
    EXPECT_EQ(c.train.optim.lr, 0.5);
    EXPECT_THROW(load_experiment(std::nullopt, {"eval.ks=4,2"}), UserError);
    EXPECT_THROW(load_experiment(std::nullopt, {"eval.n_resamples=10"}), UserError);
    EXPECT_THROW(load_experiment(std::nullopt, {"model.n_layers=1"}), UserError);
    EXPECT_THROW(load_experiment(std::nullopt, {"noequals"}), UserError);
}

TEST(CliConfig, HashIgnoresPathsButNotSettings) {
    const auto a = load_experiment(std::nullopt, {"paths.corpus=x", "out_dir=o1"});
    const auto b = load_experiment(std::nullopt, {"paths.corpus=y", "out_dir=o2"});
    const auto c = load_experiment(std::nullopt, {"seed=9"});
    EXPECT_EQ(a.hash, b.hash);
    EXPECT_NE(a.hash, c.hash);
    // The default text round-trips through the loader.
    testing::TempDir d;
    testing::write_file(d / "defaults.conf", default_config_text());
    EXPECT_EQ(load_experiment(d / "defaults.conf", {}).hash, load_experiment(std::nullopt, {}).hash);
}

}  // namespace
}  // namespace hart::cli
