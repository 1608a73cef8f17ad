#include "iclsel/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "iclsel/backend.hpp"
#include "iclsel/embedding_store.hpp"
#include "iclsel/error.hpp"
#include "iclsel/io.hpp"
#include "iclsel/metrics.hpp"
#include "iclsel/prompting.hpp"
#include "iclsel/selection.hpp"
#include "iclsel/synthesis.hpp"

namespace fs = std::filesystem;

namespace iclsel {

namespace {

struct OptionSpec {
    const char* name;
    const char* help;
    bool input_path = false;
};

const std::vector<OptionSpec> kCommon = {
    {"config", "JSON config file (flags > ICLSEL_* env > config > defaults)", true},
    {"out", "output directory (default: out)"},
    {"threads", "worker threads (default: number of processors)"},
};
const std::vector<OptionSpec> kPool = {
    {"pool", "candidate pool JSONL", true},
    {"normalize", "L2-normalize embeddings at load: on|off (default: on)"},
};
const std::vector<OptionSpec> kQueries = {{"queries", "query JSONL", true}};
const std::vector<OptionSpec> kSelector = {
    {"method", "random|bm25|topk|topk_sd (default: topk)"},
    {"k", "number of demonstrations (default: 8)"},
    {"lambda", "interpolation weight of the original embedding, topk_sd only"},
    {"seed", "random seed (default: 0)"},
    {"query-synthesis", "interpolate the query toward the reference vector: on|off (default: on)"},
    {"stage1-size", "two-stage mode: stage-1 candidate count"},
    {"ordering", "similarity_ascending|similarity_descending|pool_order (default: similarity_ascending)"},
    {"k1", "BM25 k1 (default: 1.5)"},
    {"b", "BM25 b (default: 0.75)"},
};
const std::vector<OptionSpec> kSynthesizedInput = {
    {"synthesized", "synthesized pool JSONL written by `synthesize`", true},
    {"synthesized-meta", "its metadata sidecar (default: <synthesized>.meta.json next to it)", true},
};
const std::vector<OptionSpec> kBackend = {
    {"template", "prompt template JSON", true},
    {"backend", "none|vote_stub|constant|http"},
    {"backend-url", "http backend endpoint"},
    {"backend-timeout-ms", "http timeout in ms (default: 30000)"},
    {"backend-retries", "extra attempts on timeout/5xx (default: 2)"},
};

std::string env_name(const std::string& key) {
    std::string out = "ICLSEL_";
    for (char c : key) out.push_back(c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    return out;
}

std::string file_key(const std::string& key) {
    std::string out = key;
    for (auto& c : out)
        if (c == '-') c = '_';
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw InputError(fmt::format("--{}: expected on|off, got '{}'", key, v));
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        T out{};
        if constexpr (std::is_floating_point_v<T>) {
            out = std::stod(v, &used);
        } else {
            if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
            out = static_cast<T>(std::stoull(v, &used));
        }
        if (used != v.size()) throw std::invalid_argument("trailing");
        return out;
    } catch (const std::exception&) {
        throw InputError(fmt::format("--{}: invalid number '{}'", key, v));
    }
}

/// Resolves option values and records what was used for the manifest.
class Settings {
  public:
    void set_cli(std::map<std::string, std::string> values) { cli_ = std::move(values); }

    void load_config_file() {
        auto path = raw("config");
        if (!path) return;
        try {
            file_ = nlohmann::json::parse(read_file(*path));
        } catch (const nlohmann::json::parse_error& e) {
            throw InputError(fmt::format("{}: {}", *path, e.what()));
        }
        if (!file_.is_object()) throw InputError(fmt::format("{}: config must be a JSON object", *path));
        resolved_["config"] = *path;
    }

    std::optional<std::string> raw(const std::string& key) const {
        if (auto it = cli_.find(key); it != cli_.end()) return it->second;
        if (const char* env = std::getenv(env_name(key).c_str())) return std::string(env);
        auto fk = file_key(key);
        if (file_.is_object() && file_.contains(fk) && !file_[fk].is_null()) {
            const auto& v = file_[fk];
            if (v.is_string()) return v.get<std::string>();
            if (v.is_boolean()) return v.get<bool>() ? "on" : "off";
            return v.dump();
        }
        return std::nullopt;
    }

    std::optional<std::string> get(const std::string& key) {
        auto v = raw(key);
        if (v) resolved_[key] = *v;
        return v;
    }
    std::string get(const std::string& key, const std::string& fallback) {
        auto v = raw(key).value_or(fallback);
        resolved_[key] = v;
        return v;
    }
    std::string require(const std::string& key) {
        auto v = get(key);
        if (!v || v->empty()) throw InputError(fmt::format("missing required option --{}", key));
        return *v;
    }
    bool flag(const std::string& key, bool fallback) {
        return parse_bool(key, get(key, fallback ? "on" : "off"));
    }
    template <typename T>
    T number(const std::string& key, T fallback) {
        auto v = get(key);
        if (!v) {
            resolved_[key] = fmt::format("{}", fallback);
            return fallback;
        }
        return parse_number<T>(key, *v);
    }
    template <typename T>
    std::optional<T> optional_number(const std::string& key) {
        auto v = get(key);
        if (!v) return std::nullopt;
        return parse_number<T>(key, *v);
    }

    const std::map<std::string, std::string>& resolved() const { return resolved_; }

  private:
    std::map<std::string, std::string> cli_;
    nlohmann::json file_;
    std::map<std::string, std::string> resolved_;
};

std::string utc_now() {
    auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// One subcommand execution: resolved settings, tracked inputs, atomic
/// outputs, and the manifest written last.
class Run {
  public:
    Run(std::string command, Settings& settings, std::ostream& out)
        : command_(std::move(command)), settings_(settings), out_(out) {
        out_dir_ = settings_.get("out", "out");
        threads_ = settings_.number<std::size_t>("threads", default_thread_count());
        if (threads_ == 0) threads_ = 1;
        seed_ = settings_.number<std::uint64_t>("seed", 0);
    }

    Settings& settings() { return settings_; }
    std::ostream& out() { return out_; }
    std::size_t threads() const { return threads_; }
    std::uint64_t seed() const { return seed_; }

    /// Resolves a required input path, checks it exists and records its digest.
    std::string input(const std::string& key) {
        auto path = settings_.require(key);
        track(key, path);
        return path;
    }
    std::optional<std::string> optional_input(const std::string& key) {
        auto path = settings_.get(key);
        if (path) track(key, *path);
        return path;
    }

    void write(const std::string& name, const std::string& content) {
        atomic_write(fs::path(out_dir_) / name, content);
        outputs_.push_back(name);
    }

    void finish() {
        nlohmann::ordered_json config;
        for (const auto& [k, v] : settings_.resolved()) config[k] = v;
        nlohmann::ordered_json m;
        m["tool"] = "iclsel";
        m["version"] = kVersion;
        m["subcommand"] = command_;
        m["config"] = config;
        m["config_digest"] = sha256_hex(config.dump());
        nlohmann::ordered_json inputs = nlohmann::ordered_json::object();
        for (const auto& [key, entry] : inputs_) inputs[key] = entry;
        m["inputs"] = inputs;
        m["seed"] = seed_;
        m["outputs"] = outputs_;
        m["created_at"] = utc_now();
        atomic_write(fs::path(out_dir_) / "manifest.json", m.dump(2) + "\n");
    }

  private:
    void track(const std::string& key, const std::string& path) {
        if (!fs::exists(path)) throw InputError(fmt::format("--{}: '{}' does not exist", key, path));
        nlohmann::ordered_json entry;
        entry["path"] = path;
        entry["sha256"] = sha256_hex(read_file(path));
        inputs_[key] = std::move(entry);
    }

    std::string command_;
    Settings& settings_;
    std::ostream& out_;
    std::string out_dir_;
    std::size_t threads_ = 1;
    std::uint64_t seed_ = 0;
    std::map<std::string, nlohmann::ordered_json> inputs_;
    std::vector<std::string> outputs_;
};

CandidatePool load_pool_input(Run& run) {
    auto path = run.input("pool");
    return load_pool(path, run.settings().flag("normalize", true));
}

std::vector<Query> load_query_input(Run& run, const CandidatePool& pool) {
    auto path = run.input("queries");
    return load_queries(path, pool, pool.normalized());
}

SelectorConfig selector_from(Run& run) {
    auto& s = run.settings();
    SelectorConfig c;
    c.method = parse_method(s.get("method", "topk"));
    c.k = s.number<std::size_t>("k", 8);
    c.lambda = s.optional_number<double>("lambda");
    c.seed = run.seed();
    c.query_synthesis = s.flag("query-synthesis", true);
    c.stage1_size = s.optional_number<std::size_t>("stage1-size");
    c.ordering = parse_ordering(s.get("ordering", "similarity_ascending"));
    c.bm25.k1 = s.number<double>("k1", 1.5);
    c.bm25.b = s.number<double>("b", 0.75);
    return c;
}

/// Synthesized pool for topk_sd: loaded when --synthesized is given,
/// otherwise computed from the pool.
std::optional<SynthesizedPool> synthesized_for(Run& run, const CandidatePool& pool, const SelectorConfig& config) {
    if (config.method != Method::topk_sd) return std::nullopt;
    config.validate();
    auto path = run.optional_input("synthesized");
    if (!path) return synthesize_pool(pool, *config.lambda);
    auto meta = run.settings().get("synthesized-meta");
    fs::path meta_path = meta ? fs::path(*meta) : fs::path(*path).replace_extension(".meta.json");
    if (!meta) run.settings().get("synthesized-meta", meta_path.string());
    auto loaded = load_synthesized(*path, meta_path);
    check_synthesized_matches(loaded, pool);
    return loaded;
}

struct IclSetup {
    std::optional<PromptTemplate> tmpl;
    std::unique_ptr<InferenceBackend> backend;
};

IclSetup icl_setup(Run& run, const CandidatePool& pool, const std::string& default_backend) {
    IclSetup out;
    auto& s = run.settings();
    BackendSettings b;
    b.kind = s.get("backend", default_backend);
    if (b.kind == "none") return out;
    if (b.kind == "http") b.url = s.require("backend-url");
    b.timeout_ms = s.number<int>("backend-timeout-ms", 30000);
    b.retries = s.number<int>("backend-retries", 2);
    out.tmpl = load_template(run.input("template"));
    out.tmpl->validate(pool.label_vocabulary());
    out.backend = make_backend(b);
    return out;
}

std::map<ExampleId, const Query*> index_queries(const std::vector<Query>& queries) {
    std::map<ExampleId, const Query*> out;
    for (const auto& q : queries) out[q.id] = &q;
    return out;
}

const Query& query_for(const std::map<ExampleId, const Query*>& index, ExampleId id) {
    auto it = index.find(id);
    if (it == index.end()) throw InputError(fmt::format("selection refers to unknown query {}", id));
    return *it->second;
}

// ---- subcommands ----

void cmd_validate(Run& run) {
    auto pool = load_pool_input(run);
    auto centroids = class_centroids(pool);
    std::string labels;
    for (std::size_t k = 0; k < centroids.size(); ++k)
        labels += fmt::format("{}{} ({})", k ? ", " : "", centroids.labels[k], centroids.counts[k]);
    run.out() << fmt::format("pool: n={} d={} labels=[{}] normalized={} digest={}\n", pool.size(), pool.dimension(),
                             labels, pool.normalized() ? "on" : "off", pool.digest());
    if (run.settings().raw("queries")) {
        auto queries = load_query_input(run, pool);
        std::size_t gold = 0;
        for (const auto& q : queries) gold += q.gold_label.has_value();
        run.out() << fmt::format("queries: n={} with_gold_label={}\n", queries.size(), gold);
    }
}

void cmd_centroids(Run& run) {
    auto pool = load_pool_input(run);
    auto centroids = class_centroids(pool);
    run.write("centroids.json", centroids_json(centroids, reference_vector(centroids)));
}

void cmd_synthesize(Run& run) {
    auto pool = load_pool_input(run);
    auto lambda = parse_number<double>("lambda", run.settings().require("lambda"));
    auto synthesized = synthesize_pool(pool, lambda);
    run.write("synthesized.jsonl", pool_to_jsonl(synthesized.pool()));
    run.write("synthesized.meta.json", synthesized_metadata_json(synthesized));
    if (!synthesized.zero_vector_ids().empty())
        run.out() << fmt::format("warning: {} synthesized vectors are exactly zero\n",
                                 synthesized.zero_vector_ids().size());
}

void cmd_select(Run& run) {
    auto pool = load_pool_input(run);
    auto queries = load_query_input(run, pool);
    auto config = selector_from(run);
    auto synthesized = synthesized_for(run, pool, config);
    Selector selector(pool, synthesized ? &*synthesized : nullptr, config);
    std::vector<std::string> lines(queries.size());
    parallel_for(queries.size(), run.threads(), [&](std::size_t i) { lines[i] = to_jsonl_line(selector.select(queries[i])); });
    std::string out;
    for (const auto& l : lines) out += l;
    run.write("selections.jsonl", out);
}

void cmd_prompt(Run& run) {
    auto pool = load_pool_input(run);
    auto queries = load_query_input(run, pool);
    auto index = index_queries(queries);
    auto selections = parse_selections(read_file(run.input("selections")), "selections");
    auto tmpl = load_template(run.input("template"));
    tmpl.validate(pool.label_vocabulary());
    std::string out;
    for (const auto& s : selections) {
        auto prompt = build_prompt(tmpl, prompt_demos(pool, s), query_for(index, s.query_id));
        nlohmann::ordered_json j;
        j["query_id"] = s.query_id;
        j["prompt"] = prompt;
        j["prompt_digest"] = sha256_hex(prompt);
        out += j.dump() + "\n";
    }
    run.write("prompts.jsonl", out);
}

void cmd_infer(Run& run) {
    auto pool = load_pool_input(run);
    auto queries = load_query_input(run, pool);
    auto index = index_queries(queries);
    auto selections = parse_selections(read_file(run.input("selections")), "selections");
    auto icl = icl_setup(run, pool, "vote_stub");
    if (!icl.backend) throw InputError("infer needs a backend (vote_stub, constant or http)");
    std::vector<std::string> lines(selections.size());
    parallel_for(selections.size(), run.threads(), [&](std::size_t i) {
        const auto& s = selections[i];
        auto prompt = build_prompt(*icl.tmpl, prompt_demos(pool, s), query_for(index, s.query_id));
        auto scores = score_labels(*icl.backend, prompt, pool.label_vocabulary(), *icl.tmpl,
                                   prompt_metadata(*icl.tmpl, s));
        lines[i] = to_json(scores, s.query_id).dump() + "\n";
    });
    std::string out;
    for (const auto& l : lines) out += l;
    run.write("predictions.jsonl", out);
}

void cmd_evaluate(Run& run) {
    auto pool = load_pool_input(run);
    auto queries = load_query_input(run, pool);
    auto config = selector_from(run);
    auto synthesized = synthesized_for(run, pool, config);
    auto icl = icl_setup(run, pool, "none");
    IclPredictor predictor;
    if (icl.backend) predictor = make_icl_predictor(*icl.tmpl, *icl.backend, pool);
    auto report = evaluate(pool, synthesized ? &*synthesized : nullptr, queries, config, predictor, run.threads());

    std::string selections;
    for (const auto& s : report.selections) selections += to_jsonl_line(s);
    run.write("selections.jsonl", selections);
    run.write("report.json", to_json(report).dump(2) + "\n");
    auto text = to_text(report);
    run.write("report.txt", text);
    if (predictor && !report.records.empty()) {
        auto k = report.records.front().k;
        run.write("buckets.csv", buckets_csv(consistency_accuracy_buckets(report.records, k)));
    }
    run.out() << text;
}

void cmd_sweep(Run& run) {
    auto& s = run.settings();
    auto pool = load_pool_input(run);
    auto queries = load_query_input(run, pool);
    auto axis = s.get("axis", "lambda");
    auto icl = icl_setup(run, pool, "none");
    IclPredictor predictor;
    if (icl.backend) predictor = make_icl_predictor(*icl.tmpl, *icl.backend, pool);

    SweepReport report;
    if (axis == "lambda") {
        auto grid_spec = s.get("grid", "0.0:0.9:0.1");
        auto grid = parse_grid(grid_spec);
        SelectorConfig base;
        base.k = s.number<std::size_t>("k", 8);
        base.seed = run.seed();
        base.ordering = parse_ordering(s.get("ordering", "similarity_ascending"));
        base.stage1_size = s.optional_number<std::size_t>("stage1-size");
        base.validate();
        report = lambda_sweep(pool, queries, grid, base, predictor, run.threads());
    } else if (axis == "k") {
        auto values = parse_grid(s.get("grid", "1:8:1"));
        std::vector<std::size_t> grid;
        for (double v : values) {
            if (v < 1 || v != std::floor(v)) throw InputError(fmt::format("k grid value {} is not a positive integer", v));
            grid.push_back(static_cast<std::size_t>(v));
        }
        auto config = selector_from(run);
        report = k_sweep(pool, queries, grid, config, predictor, run.threads());
    } else {
        throw InputError(fmt::format("--axis must be lambda or k, got '{}'", axis));
    }
    run.write("sweep.csv", sweep_csv(report));
    run.write("sweep.json", to_json(report).dump(2) + "\n");
    auto text = to_text(report);
    run.write("sweep.txt", text);
    run.out() << text;
}

void cmd_report(Run& run) {
    auto path = run.input("report");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError(fmt::format("{}: {}", path, e.what()));
    }
    auto kind = j.value("kind", std::string());
    std::string text;
    if (kind == "sweep")
        text = to_text(sweep_from_json(j));
    else if (kind == "evaluation")
        text = to_text(evaluation_from_json(j));
    else
        throw InputError(fmt::format("{}: not a report.json or sweep.json", path));
    run.write("report.txt", text);
    run.out() << text;
}

struct Command {
    const char* name;
    const char* help;
    std::vector<std::vector<OptionSpec>> options;
    void (*fn)(Run&);
};

std::vector<Command> commands() {
    const std::vector<OptionSpec> selections = {{"selections", "selections JSONL from `select`", true}};
    const std::vector<OptionSpec> tmpl = {{"template", "prompt template JSON", true}};
    const std::vector<OptionSpec> seed = {{"seed", "random seed (default: 0)"}};
    const std::vector<OptionSpec> lambda = {{"lambda", "interpolation weight of the original embedding"}};
    const std::vector<OptionSpec> sweep = {
        {"axis", "lambda|k (default: lambda)"},
        {"grid", "start:stop:step or comma list (default: 0.0:0.9:0.1 for lambda, 1:8:1 for k)"},
    };
    const std::vector<OptionSpec> report = {{"report", "report.json or sweep.json", true}};
    return {
        {"validate", "check pool (and query) files and print a summary", {kPool, kQueries, seed}, cmd_validate},
        {"centroids", "write per-label centroids and the reference vector", {kPool, seed}, cmd_centroids},
        {"synthesize", "write the interpolated pool and its metadata", {kPool, lambda, seed}, cmd_synthesize},
        {"select", "select demonstrations for every query", {kPool, kQueries, kSelector, kSynthesizedInput},
         cmd_select},
        {"prompt", "build k-shot prompts from selections", {kPool, kQueries, selections, tmpl, seed}, cmd_prompt},
        {"infer", "score candidate labels through a backend", {kPool, kQueries, selections, kBackend, seed},
         cmd_infer},
        {"evaluate", "select, then report consistency, similarity and accuracy",
         {kPool, kQueries, kSelector, kSynthesizedInput, kBackend}, cmd_evaluate},
        {"sweep", "sweep lambda or k and report aggregates per grid point", {kPool, kQueries, kSelector, kBackend, sweep},
         cmd_sweep},
        {"report", "render a report.json or sweep.json as text", {report, seed}, cmd_report},
    };
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"iclsel: demonstration selection for in-context learning", "iclsel"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);
    auto cmds = commands();
    std::map<std::string, std::map<std::string, std::string>> values;
    std::map<std::string, std::map<std::string, CLI::Option*>> options;
    for (const auto& c : cmds) {
        auto* sub = app.add_subcommand(c.name, c.help);
        auto add = [&](const OptionSpec& o) {
            if (options[c.name].contains(o.name)) return;
            options[c.name][o.name] = sub->add_option(std::string("--") + o.name, values[c.name][o.name], o.help);
        };
        for (const auto& o : kCommon) add(o);
        for (const auto& group : c.options)
            for (const auto& o : group) add(o);
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << "\n";
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitInput;
    }

    for (const auto& c : cmds) {
        auto* sub = app.get_subcommand(c.name);
        if (!sub->parsed()) continue;
        std::map<std::string, std::string> given;
        for (const auto& [name, opt] : options[c.name])
            if (opt->count() > 0) given[name] = values[c.name][name];
        try {
            Settings settings;
            settings.set_cli(std::move(given));
            settings.load_config_file();
            Run run(c.name, settings, out);
            c.fn(run);
            run.finish();
            return kExitOk;
        } catch (const BackendError& e) {
            err << "backend error: " << e.what() << "\n";
            return kExitBackend;
        } catch (const ProtocolError& e) {
            err << "protocol error: " << e.what() << "\n";
            return kExitBackend;
        } catch (const std::exception& e) {
            err << "error: " << e.what() << "\n";
            return kExitInput;
        }
    }
    err << app.help();
    return kExitInput;
}

}  // namespace iclsel
