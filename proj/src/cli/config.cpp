#include "hart/cli/config.hpp"

#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "hart/util/text.hpp"

namespace hart::cli {

std::map<std::string, std::string> parse_config_text(std::string_view text) {
    std::map<std::string, std::string> out;
    std::string section;
    std::istringstream in{std::string(text)};
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string_view line = util::trim(raw);
        if (line.empty() || line.front() == '#') continue;
        const std::string where = "config line " + std::to_string(lineno);
        if (line.front() == '[') {
            if (line.back() != ']') throw UserError(where + ": unterminated section header");
            section = std::string(util::trim(line.substr(1, line.size() - 2)));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw UserError(where + ": expected key = value");
        const std::string key(util::trim(line.substr(0, eq)));
        std::string_view val = util::trim(line.substr(eq + 1));
        if (val.size() >= 2 && val.front() == '"' && val.back() == '"') {
            val = val.substr(1, val.size() - 2);
        } else if (const auto hash = val.find(" #"); hash != std::string_view::npos) {
            val = util::trim(val.substr(0, hash));
        }
        if (key.empty()) throw UserError(where + ": empty key");
        const std::string full = section.empty() ? key : section + "." + key;
        if (!out.emplace(full, std::string(val)).second) {
            throw UserError(where + ": duplicate key '" + full + "'");
        }
    }
    return out;
}

std::string canonical_text(const std::map<std::string, std::string>& values) {
    std::string s;
    for (const auto& [k, v] : values) s += k + "=" + v + "\n";
    return s;
}

namespace {

// Binds string values to typed fields. Every known key must be registered
// with a default; anything left over is an unknown field.
class Binder {
public:
    explicit Binder(std::map<std::string, std::string>& values) : values_(values) {}

    template <typename Parse>
    void bind(const std::string& key, const std::string& def, Parse&& apply) {
        known_.insert(key);
        auto it = values_.find(key);
        if (it == values_.end()) it = values_.emplace(key, def).first;
        try {
            apply(it->second);
        } catch (const UserError&) {
            throw;
        } catch (const std::exception& e) {
            throw UserError("invalid value '" + it->second + "' for config field '" + key +
                            "': " + e.what());
        }
    }

    void size(const std::string& key, std::size_t& dst) {
        bind(key, std::to_string(dst), [&](const std::string& v) { dst = util::parse_size(v, key); });
    }
    void u64(const std::string& key, std::uint64_t& dst) {
        bind(key, std::to_string(dst), [&](const std::string& v) { dst = util::parse_u64(v, key); });
    }
    void i64(const std::string& key, std::int64_t& dst) {
        bind(key, std::to_string(dst), [&](const std::string& v) { dst = util::parse_int(v, key); });
    }
    void real(const std::string& key, double& dst) {
        bind(key, util::format_double(dst),
             [&](const std::string& v) { dst = util::parse_double(v, key); });
    }
    void text(const std::string& key, std::string& dst) {
        bind(key, dst, [&](const std::string& v) { dst = v; });
    }
    void path(const std::string& key, std::filesystem::path& dst) {
        bind(key, dst.string(), [&](const std::string& v) { dst = v; });
    }
    bool present(const std::string& key) const { return values_.count(key) != 0; }

    void reject_unknown() const {
        for (const auto& [k, v] : values_) {
            if (!known_.count(k)) throw UserError("unknown config field '" + k + "'");
        }
    }

private:
    std::map<std::string, std::string>& values_;
    std::set<std::string> known_;
};

void bind_all(Binder& b, ExperimentConfig& c, bool& layers_given) {
    b.u64("seed", c.seed);
    b.path("out_dir", c.out_dir);

    b.path("paths.corpus", c.paths.corpus);
    b.path("paths.vocab", c.paths.vocab);
    b.path("paths.checkpoint", c.paths.checkpoint);
    b.path("paths.labels", c.paths.labels);
    b.path("paths.train", c.paths.train);
    b.path("paths.dev", c.paths.dev);
    b.path("paths.baseline", c.paths.baseline);

    b.bind("data.task", c.task, [&](const std::string& v) {
        if (v != "lm" && v != "document" && v != "user") {
            throw UserError("config field 'data.task' must be lm, document or user, got '" + v + "'");
        }
        c.task = v;
    });
    auto& d = c.data;
    b.size("data.n_users", d.n_users);
    b.size("data.messages_min", d.messages_min);
    b.size("data.messages_max", d.messages_max);
    b.size("data.tokens_min", d.tokens_min);
    b.size("data.tokens_max", d.tokens_max);
    b.size("data.vocab_size", d.vocab_size);
    b.size("data.subvocab_size", d.subvocab_size);
    b.real("data.bias", d.bias);
    b.real("data.bias_max", d.bias_max);
    b.size("data.n_styles", d.n_styles);
    b.text("data.user_prefix", d.user_prefix);
    b.i64("data.start_time", d.start_time);
    b.size("data.docs_per_user", c.doc_task.docs_per_user);
    b.size("data.labeled_tokens_min", c.doc_task.labeled_tokens_min);
    b.size("data.labeled_tokens_max", c.doc_task.labeled_tokens_max);
    b.real("data.labeled_bias", c.doc_task.labeled_bias);
    b.real("data.dev_fraction", c.task_dev_fraction);
    b.real("data.test_fraction", c.task_test_fraction);

    b.real("split.dev_unseen", c.split.dev_unseen);
    b.real("split.test_unseen", c.split.test_unseen);
    b.real("split.seen_users", c.split.seen_users);
    b.real("split.heldout_message_fraction", c.split.heldout_message_fraction);
    b.size("vocab.min_count", c.min_count);

    auto& m = c.model;
    layers_given = b.present("model.insert_layer") || b.present("model.extract_layer");
    b.size("model.d_model", m.d_model);
    b.size("model.n_layers", m.n_layers);
    b.size("model.n_heads", m.n_heads);
    b.size("model.block_size", m.block_size);
    b.size("model.insert_layer", m.insert_layer);
    b.size("model.extract_layer", m.extract_layer);
    b.size("model.max_blocks", m.max_blocks);
    b.size("model.mlp_ratio", m.mlp_ratio);
    b.real("model.dropout", m.dropout);
    b.real("model.ln_eps", m.ln_eps);

    auto& t = c.train;
    b.real("train.lr", t.optim.lr);
    b.size("train.batch_size", t.batch_size);
    b.size("train.epochs", t.epochs);
    b.size("train.patience", t.patience);
    b.real("train.weight_decay", t.optim.weight_decay);
    b.size("train.warmup_steps", t.optim.warmup_steps);
    b.real("train.clip_norm", t.optim.clip_norm);
    b.size("train.max_steps", t.max_steps);
    b.bind("train.mode", "full", [&](const std::string& v) { t.mode = model::parse_mode(v); });
    b.bind("train.instances", "user_blocks", [&](const std::string& v) {
        if (v == "user_blocks") {
            c.instances = train::InstanceKind::user_blocks;
        } else if (v == "per_message") {
            c.instances = train::InstanceKind::per_message;
        } else {
            throw UserError("config field 'train.instances' must be user_blocks or per_message");
        }
    });

    auto& f = c.finetune;
    b.real("finetune.lr", f.optim.lr);
    b.size("finetune.batch_size", f.batch_size);
    b.size("finetune.epochs", f.epochs);
    b.size("finetune.patience", f.patience);
    b.real("finetune.weight_decay", f.optim.weight_decay);
    b.size("finetune.warmup_steps", f.optim.warmup_steps);
    b.real("finetune.clip_norm", f.optim.clip_norm);
    b.size("finetune.max_blocks", f.max_blocks);
    b.bind("finetune.doc_mode", "full",
           [&](const std::string& v) { c.doc_mode = finetune::parse_doc_mode(v); });
    b.bind("finetune.freeze", "recurrence_only",
           [&](const std::string& v) { c.freeze = finetune::parse_freeze(v); });

    b.size("eval.history_blocks", c.history_blocks);
    b.bind("eval.ks", "1,2,4", [&](const std::string& v) {
        c.sweep_ks.clear();
        for (const auto& part : util::split(v, ',')) {
            c.sweep_ks.push_back(util::parse_size(util::trim(part), "eval.ks"));
        }
    });
    b.bind("eval.mode", "full", [&](const std::string& v) { c.eval_mode = model::parse_mode(v); });
    b.size("eval.n_resamples", c.n_resamples);
    b.bind("eval.test", c.test, [&](const std::string& v) {
        if (v != "permutation" && v != "bootstrap") {
            throw UserError("config field 'eval.test' must be permutation or bootstrap");
        }
        c.test = v;
    });
    b.bind("eval.paired_scoring", "word_conditional", [&](const std::string& v) {
        if (v == "word_conditional") {
            c.paired_scoring = eval::PairedScoring::word_conditional;
        } else if (v == "joint") {
            c.paired_scoring = eval::PairedScoring::joint;
        } else {
            throw UserError("config field 'eval.paired_scoring' must be word_conditional or joint");
        }
    });
    b.real("eval.reliability", c.reliability);
    b.bind("eval.split", c.eval_split, [&](const std::string& v) {
        if (v != "train" && v != "dev" && v != "test") {
            throw UserError("config field 'eval.split' must be train, dev or test");
        }
        c.eval_split = v;
    });
    b.bind("eval.variant", "", [&](const std::string& v) {
        if (!v.empty() && v != "no_recurrence" && v != "not_pretrained" && v != "no_history" &&
            v != "frozen") {
            throw UserError("config field 'eval.variant' must be one of no_recurrence, "
                            "not_pretrained, no_history, frozen");
        }
        c.variant = v;
    });
}

}  // namespace

std::string default_config_text() {
    std::map<std::string, std::string> values;
    ExperimentConfig c;
    Binder b(values);
    bool layers_given = false;
    bind_all(b, c, layers_given);
    return canonical_text(values);
}

ExperimentConfig load_experiment(const std::optional<std::filesystem::path>& file,
                                 const std::vector<std::string>& overrides) {
    std::map<std::string, std::string> values;
    if (file) {
        std::ifstream in(*file);
        if (!in) throw UserError("cannot read config file " + file->string());
        std::ostringstream ss;
        ss << in.rdbuf();
        values = parse_config_text(ss.str());
    }
    for (const auto& ov : overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw UserError("override '" + ov + "' is not of the form key=value");
        }
        values[std::string(util::trim(ov.substr(0, eq)))] = std::string(util::trim(ov.substr(eq + 1)));
    }

    ExperimentConfig c;
    Binder b(values);
    bool layers_given = false;
    bind_all(b, c, layers_given);
    b.reject_unknown();

    c.data.seed = c.seed;
    c.doc_task.history = c.data;
    c.doc_task.dev_fraction = c.task_dev_fraction;
    c.doc_task.test_fraction = c.task_test_fraction;
    c.train.seed = c.seed;
    c.finetune.seed = c.seed;
    if (!layers_given) {
        c.model.set_default_layers();
        values["model.insert_layer"] = std::to_string(c.model.insert_layer);
        values["model.extract_layer"] = std::to_string(c.model.extract_layer);
    }

    auto check = [](bool ok, const std::string& msg) {
        if (!ok) throw UserError(msg);
    };
    check(c.train.optim.lr >= 0.0, "config field 'train.lr' must be >= 0");
    check(c.finetune.optim.lr >= 0.0, "config field 'finetune.lr' must be >= 0");
    check(c.train.batch_size > 0, "config field 'train.batch_size' must be > 0");
    check(c.finetune.batch_size > 0, "config field 'finetune.batch_size' must be > 0");
    check(c.finetune.max_blocks > 0, "config field 'finetune.max_blocks' must be > 0");
    check(c.n_resamples >= 100, "config field 'eval.n_resamples' must be >= 100");
    check(c.reliability > 0.0 && c.reliability <= 1.0,
          "config field 'eval.reliability' must be in (0, 1]");
    check(!c.sweep_ks.empty(), "config field 'eval.ks' must list at least one block count");
    for (std::size_t i = 0; i < c.sweep_ks.size(); ++i) {
        check(c.sweep_ks[i] > 0 && (i == 0 || c.sweep_ks[i] > c.sweep_ks[i - 1]),
              "config field 'eval.ks' must be positive and ascending");
    }
    try {
        model::ModelConfig probe = c.model;
        probe.vocab_size = 4;  // the real size comes from the vocabulary
        probe.validate();
    } catch (const std::invalid_argument& e) {
        throw UserError(std::string("model config: ") + e.what());
    }

    c.values = values;
    // Where inputs live and outputs go does not change the experiment; input
    // contents are fingerprinted separately in each report.
    std::map<std::string, std::string> settings;
    for (const auto& [k, v] : values) {
        if (k != "out_dir" && k.rfind("paths.", 0) != 0) settings.emplace(k, v);
    }
    c.hash = util::fnv1a_hex(canonical_text(settings));
    return c;
}

}  // namespace hart::cli
