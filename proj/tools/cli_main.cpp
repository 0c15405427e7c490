// dallmi command-line driver: dataset preparation, training, evaluation and
// the two ablation grids (interpolation stage / loss variant, sampler
// comparison). Exit codes: 0 success, 1 usage error, 2 data error,
// 3 training failure.
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dallmi/batching.hpp"
#include "dallmi/loss.hpp"
#include "dallmi/metrics.hpp"
#include "dallmi/model.hpp"
#include "dallmi/text.hpp"
#include "dallmi/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dallmi;

namespace {

constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------- utilities

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << content;
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

std::string timestamp_utc() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

std::string default_out_root() {
    const char* env = std::getenv("DALLMI_OUT_ROOT");
    return env && *env ? env : "runs";
}

// Collects everything a manifest needs while a command runs.
struct Manifest {
    std::string command;
    json config = json::object();
    std::uint64_t seed = 0;
    json inputs = json::object();   // path -> content hash
    json outputs = json::array();   // paths written
    std::string started = timestamp_utc();

    void add_input(const std::string& path) { inputs[path] = fnv1a_hex(read_file(path)); }
    void add_output(const std::string& path) { outputs.push_back(path); }

    void write(const std::string& dir) {
        json j;
        j["command"] = command;
        j["config"] = config;
        j["seed"] = seed;
        j["inputs"] = inputs;
        j["version"] = kVersion;
        j["started"] = started;
        j["finished"] = timestamp_utc();
        std::string path = (fs::path(dir) / "manifest.json").string();
        outputs.push_back(path);
        j["outputs"] = outputs;
        write_file(path, j.dump(2) + "\n");
    }
};

// Flat JSON config file: keys are long flag names (without dashes); explicit
// command-line flags win over config values, config wins over defaults.
void apply_config(CLI::App& cmd, const std::string& config_path) {
    json cfg;
    try {
        cfg = json::parse(read_file(config_path));
    } catch (const json::exception& e) {
        throw DataError("config " + config_path + ": " + e.what());
    }
    if (!cfg.is_object()) throw DataError("config " + config_path + ": expected a JSON object");
    std::set<std::string> known;
    for (CLI::Option* opt : cmd.get_options()) {
        std::string name = opt->get_single_name();
        known.insert(name);
        if (name == "config" || name == "help") continue;
        if (opt->count() > 0 || !cfg.contains(name)) continue;
        const json& v = cfg.at(name);
        opt->add_result(v.is_string() ? v.get<std::string>() : v.dump());
        opt->run_callback();
    }
    for (const auto& [key, value] : cfg.items())
        if (!known.count(key))
            throw CLI::ValidationError("config", "unknown key '" + key + "' in " + config_path);
}

// ------------------------------------------------------------ prepared data

struct PreparedMeta {
    std::size_t num_labels = 0;
    std::size_t max_len = 0;
    double keep_ratio = 1.0;
    bool has_source = false;
};

struct Prepared {
    PreparedMeta meta;
    Vocab vocab;
    SplitPair source;  // empty when meta.has_source is false
    SplitPair target;
};

void save_vocab(const Vocab& v, const std::string& path) {
    json j;
    j["id_to_token"] = v.id_to_token;
    write_file(path, j.dump() + "\n");
}

Vocab load_vocab(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw DataError("vocab " + path + ": " + e.what());
    }
    Vocab v;
    v.id_to_token = j.at("id_to_token").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < v.id_to_token.size(); ++i)
        v.token_to_id[v.id_to_token[i]] = static_cast<int>(i);
    return v;
}

Prepared load_prepared(const std::string& dir, Manifest& manifest) {
    std::string meta_path = (fs::path(dir) / "dataset.json").string();
    json meta;
    try {
        meta = json::parse(read_file(meta_path));
    } catch (const json::exception& e) {
        throw DataError("dataset.json in " + dir + ": " + e.what());
    }
    Prepared p;
    p.meta.num_labels = meta.at("num_labels").get<std::size_t>();
    p.meta.max_len = meta.at("max_len").get<std::size_t>();
    p.meta.keep_ratio = meta.at("keep_ratio").get<double>();
    p.meta.has_source = meta.at("has_source").get<bool>();
    manifest.add_input(meta_path);

    std::string vocab_path = (fs::path(dir) / "vocab.json").string();
    p.vocab = load_vocab(vocab_path);
    manifest.add_input(vocab_path);

    auto load_part = [&](const char* name) {
        std::string path = (fs::path(dir) / name).string();
        PUDataset ds = load_dataset(path, FileFormat::Jsonl);
        if (ds.num_labels() != p.meta.num_labels)
            throw DataError(path + ": label count " + std::to_string(ds.num_labels()) +
                            " != dataset.json value " + std::to_string(p.meta.num_labels));
        retokenize(ds, p.vocab, p.meta.max_len);
        manifest.add_input(path);
        return ds;
    };
    if (p.meta.has_source) {
        p.source.train = load_part("source_train.jsonl");
        p.source.test = load_part("source_test.jsonl");
        p.source.train.domain = p.source.test.domain = Domain::Source;
    }
    p.target.train = load_part("target_train.jsonl");
    p.target.test = load_part("target_test.jsonl");
    return p;
}

void save_part(const PUDataset& ds, const std::string& dir, const char* name,
               Manifest& manifest) {
    std::string path = (fs::path(dir) / name).string();
    save_dataset_jsonl(ds, path);
    manifest.add_output(path);
}

// ------------------------------------------------------------- cmd: prepare

struct PrepareArgs {
    std::string input;
    std::string format = "jsonl";
    bool synthetic = false;
    std::size_t synth_n = 500;
    std::size_t synth_labels = 5;
    std::size_t synth_vocab = 200;
    std::size_t max_len = 32;
    std::size_t min_freq = 1;
    double keep_ratio = 1.0;
    double train_frac = 0.8;
    std::int64_t seed = -1;
    std::string out;
};

int cmd_prepare(const PrepareArgs& a) {
    Manifest manifest;
    manifest.command = "prepare";
    manifest.seed = static_cast<std::uint64_t>(a.seed);
    manifest.config = {{"input", a.input},       {"format", a.format},
                       {"synthetic", a.synthetic}, {"synthetic-n", a.synth_n},
                       {"synthetic-labels", a.synth_labels},
                       {"synthetic-vocab", a.synth_vocab}, {"max-len", a.max_len},
                       {"min-freq", a.min_freq}, {"keep-ratio", a.keep_ratio},
                       {"train-frac", a.train_frac}, {"seed", a.seed}, {"out", a.out}};
    fs::create_directories(a.out);

    auto seed = static_cast<std::uint64_t>(a.seed);
    PUDataset source, target;
    bool has_source = false;
    if (a.synthetic) {
        SynthSpec spec;
        spec.n = a.synth_n;
        spec.num_labels = a.synth_labels;
        spec.vocab_size = a.synth_vocab;
        spec.max_len = a.max_len;
        spec.domain = Domain::Source;
        source = synth_dataset(spec, seed);
        spec.domain = Domain::Target;
        target = synth_dataset(spec, seed + 1);
        has_source = true;
    } else {
        manifest.add_input(a.input);
        target = load_dataset(a.input, a.format == "csv" ? FileFormat::Csv : FileFormat::Jsonl);
    }

    std::vector<std::string> corpus;
    for (const auto& s : source.samples) corpus.push_back(s.text);
    for (const auto& s : target.samples) corpus.push_back(s.text);
    Vocab vocab = build_vocab(corpus, a.min_freq);

    SplitPair target_split = split_dataset(target, a.train_frac, seed + 3);
    target_split.train = ablate_labels(target_split.train, a.keep_ratio, seed + 4);
    if (has_source) {
        SplitPair source_split = split_dataset(source, a.train_frac, seed + 2);
        save_part(source_split.train, a.out, "source_train.jsonl", manifest);
        save_part(source_split.test, a.out, "source_test.jsonl", manifest);
    }
    save_part(target_split.train, a.out, "target_train.jsonl", manifest);
    save_part(target_split.test, a.out, "target_test.jsonl", manifest);

    std::string vocab_path = (fs::path(a.out) / "vocab.json").string();
    save_vocab(vocab, vocab_path);
    manifest.add_output(vocab_path);

    json meta = {{"version", 1},
                 {"num_labels", target.num_labels()},
                 {"max_len", a.max_len},
                 {"vocab_size", vocab.size()},
                 {"keep_ratio", a.keep_ratio},
                 {"has_source", has_source},
                 {"synthetic", a.synthetic},
                 {"seed", a.seed}};
    std::string meta_path = (fs::path(a.out) / "dataset.json").string();
    write_file(meta_path, meta.dump(2) + "\n");
    manifest.add_output(meta_path);

    manifest.write(a.out);
    std::cout << "prepared " << (has_source ? "source+target" : "target") << " data in "
              << a.out << " (L=" << target.num_labels() << ", V=" << vocab.size() << ")\n";
    return 0;
}

// --------------------------------------------------------------- cmd: train

struct TrainArgs {
    std::string data;
    std::string method;  // dallmi | bce | none
    std::string variant = "norm";
    std::string stage = "word";
    std::string sampler = "cycle";
    int epochs = 12;
    int source_epochs = -1;  // -1: same as epochs
    double lr = 5e-5;
    std::size_t batch_size = 64;
    double lambda = 1.0;
    double alpha = 0.3;
    double beta = 0.3;
    std::size_t dim = 64;
    std::size_t nested_inner = 2;
    std::int64_t seed = -1;
    std::string init_checkpoint;
    bool skip_source = false;
    std::string out;
};

json train_config_json(const TrainArgs& a) {
    return {{"data", a.data},         {"method", a.method},   {"variant", a.variant},
            {"stage", a.stage},       {"sampler", a.sampler}, {"epochs", a.epochs},
            {"source-epochs", a.source_epochs}, {"lr", a.lr},
            {"batch-size", a.batch_size},       {"lambda", a.lambda},
            {"alpha", a.alpha},       {"beta", a.beta},       {"dim", a.dim},
            {"nested-inner", a.nested_inner},   {"seed", a.seed},
            {"init-checkpoint", a.init_checkpoint}, {"skip-source", a.skip_source},
            {"out", a.out}};
}

MetricsLog eval_only_log(const ModelParams& params, const PUDataset& test) {
    MetricsLog log;
    log.records.push_back({0, 0.0, 0.0, 0.0, evaluate_map(params, test), 0.0});
    return log;
}

// Shared by train/ablate/compare: source-pretrain (or load) a starting model.
ModelParams starting_params(const Prepared& prep, const TrainArgs& a, Manifest& manifest,
                            MetricsLog* source_log) {
    ModelConfig cfg{prep.vocab.size(), a.dim, prep.meta.num_labels, prep.meta.max_len};
    auto seed = static_cast<std::uint64_t>(a.seed);
    if (!a.init_checkpoint.empty()) {
        ModelParams params = load_checkpoint(a.init_checkpoint);
        if (params.config.num_labels != cfg.num_labels ||
            params.config.vocab_size != cfg.vocab_size ||
            params.config.max_len != cfg.max_len)
            throw DataError("checkpoint " + a.init_checkpoint +
                            " is incompatible with the prepared data");
        manifest.add_input(a.init_checkpoint);
        return params;
    }
    ModelParams params = init_params(cfg, seed);
    if (prep.meta.has_source && !a.skip_source) {
        TrainConfig tc;
        tc.phase = Phase::SourceSupervised;
        tc.lr = a.lr;
        tc.epochs = a.source_epochs < 0 ? a.epochs : a.source_epochs;
        tc.batch_size = a.batch_size;
        tc.seed = seed;
        MetricsLog log = train(prep.source, tc, params);
        if (source_log) *source_log = std::move(log);
    }
    return params;
}

// One target-phase run; returns the log without touching the filesystem.
MetricsLog run_target_phase(const Prepared& prep, const TrainArgs& a, ModelParams& params,
                            std::uint64_t seed) {
    if (a.method == "none") return eval_only_log(params, prep.target.test);

    TrainConfig tc;
    tc.lr = a.lr;
    tc.epochs = a.epochs;
    tc.batch_size = a.batch_size;
    tc.seed = seed;
    if (a.method == "bce") {
        tc.phase = Phase::SourceSupervised;  // plain BCE on the observed labels
    } else {
        tc.phase = Phase::TargetPU;
        tc.sampler = sampler_from_string(a.sampler);
        tc.nested_inner_size = a.nested_inner;
        tc.mixup.alpha = a.alpha;
        tc.mixup.beta = a.beta;
        tc.mixup.lambda = a.lambda;
        tc.mixup.stage = stage_from_string(a.stage);
        tc.mixup.variant = variant_from_string(a.variant);
    }
    return train(prep.target, tc, params);
}

int cmd_train(const TrainArgs& a) {
    Manifest manifest;
    manifest.command = "train";
    manifest.seed = static_cast<std::uint64_t>(a.seed);
    manifest.config = train_config_json(a);
    fs::create_directories(a.out);

    Prepared prep = load_prepared(a.data, manifest);
    MetricsLog source_log;
    ModelParams params = starting_params(prep, a, manifest, &source_log);
    if (!source_log.records.empty()) {
        std::string path = (fs::path(a.out) / "source_metrics.csv").string();
        write_file(path, source_log.to_csv());
        manifest.add_output(path);
    }

    MetricsLog log = run_target_phase(prep, a, params, static_cast<std::uint64_t>(a.seed) + 1);

    std::string ckpt = (fs::path(a.out) / "checkpoint.json").string();
    save_checkpoint(params, ckpt);
    manifest.add_output(ckpt);
    std::string csv = (fs::path(a.out) / "metrics.csv").string();
    write_file(csv, log.to_csv());
    manifest.add_output(csv);
    std::string js = (fs::path(a.out) / "metrics.json").string();
    write_file(js, log.to_json() + "\n");
    manifest.add_output(js);
    manifest.config["measured_seconds"] = log.total_seconds() + source_log.total_seconds();
    manifest.write(a.out);

    std::cout << "method=" << a.method << " final mAP=" << log.records.back().map << " ("
              << a.out << ")\n";
    return 0;
}

// ---------------------------------------------------------------- cmd: eval

struct EvalArgs {
    std::string checkpoint;
    std::string data;
    std::string split = "target_test";
    std::string out;
};

int cmd_eval(const EvalArgs& a) {
    Manifest manifest;
    manifest.command = "eval";
    manifest.config = {{"checkpoint", a.checkpoint}, {"data", a.data},
                       {"split", a.split},           {"out", a.out}};
    fs::create_directories(a.out);

    ModelParams params = load_checkpoint(a.checkpoint);
    manifest.add_input(a.checkpoint);
    Prepared prep = load_prepared(a.data, manifest);
    if (params.config.num_labels != prep.meta.num_labels)
        throw DataError("checkpoint has " + std::to_string(params.config.num_labels) +
                        " labels, data has " + std::to_string(prep.meta.num_labels));

    const PUDataset* ds = nullptr;
    if (a.split == "target_test") ds = &prep.target.test;
    else if (a.split == "target_train") ds = &prep.target.train;
    else if (a.split == "source_test") ds = &prep.source.test;
    else if (a.split == "source_train") ds = &prep.source.train;
    else throw CLI::ValidationError("--split", "unknown split " + a.split);
    if (ds->n() == 0) throw DataError("split " + a.split + " is empty in " + a.data);

    const auto& truth = ds->has_full_labels() ? ds->full_labels : ds->labels;
    EvalReport report = mean_average_precision(score_dataset(params, *ds), truth);

    std::string js = (fs::path(a.out) / "report.json").string();
    write_file(js, report.to_json() + "\n");
    manifest.add_output(js);
    std::string table = (fs::path(a.out) / "report.txt").string();
    write_file(table, report.to_table());
    manifest.add_output(table);
    manifest.write(a.out);

    std::cout << report.to_table();
    return 0;
}

// -------------------------------------------------------------- cmd: ablate

struct GridArgs {
    std::string data;
    std::string grid = "stage";  // stage | variant
    int seeds = 1;
    TrainArgs train;  // shared hyperparameters; method fixed to dallmi
};

double mean_final_map(const Prepared& prep, const GridArgs& g, const ModelParams& start,
                      const TrainArgs& cell) {
    double sum = 0.0;
    for (int k = 0; k < g.seeds; ++k) {
        ModelParams params = start;
        MetricsLog log = run_target_phase(prep, cell, params,
                                          static_cast<std::uint64_t>(cell.seed) + 1 +
                                              static_cast<std::uint64_t>(k));
        sum += log.records.back().map;
    }
    return sum / g.seeds;
}

std::string fmt_map(double v) {
    std::ostringstream os;
    os.precision(6);
    os << std::fixed << v;
    return os.str();
}

int cmd_ablate(const GridArgs& g) {
    Manifest manifest;
    manifest.command = "ablate";
    manifest.seed = static_cast<std::uint64_t>(g.train.seed);
    manifest.config = train_config_json(g.train);
    manifest.config["grid"] = g.grid;
    manifest.config["seeds"] = g.seeds;
    fs::create_directories(g.train.out);

    Prepared prep = load_prepared(g.train.data, manifest);
    ModelParams start = starting_params(prep, g.train, manifest, nullptr);

    // reference cell is always word-stage / norm-variant
    std::vector<std::pair<std::string, std::string>> cells;
    if (g.grid == "stage")
        cells = {{"word", "norm"}, {"encoding", "norm"}, {"sentence", "norm"}};
    else if (g.grid == "variant")
        cells = {{"word", "norm"}, {"word", "log"}};
    else
        throw CLI::ValidationError("--grid", "unknown grid " + g.grid);

    std::ostringstream csv;
    csv << "stage,variant,mean_map,rel_change_pct\n";
    double ref = 0.0;
    std::vector<std::pair<std::string, double>> rows;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        TrainArgs cell = g.train;
        cell.method = "dallmi";
        cell.stage = cells[i].first;
        cell.variant = cells[i].second;
        double m = mean_final_map(prep, g, start, cell);
        if (i == 0) ref = m;
        double rel = i == 0 ? 0.0 : (m - ref) / ref * 100.0;
        csv << cells[i].first << "," << cells[i].second << "," << fmt_map(m) << ","
            << fmt_map(rel) << "\n";
    }

    std::string path = (fs::path(g.train.out) / "ablation.csv").string();
    write_file(path, csv.str());
    manifest.add_output(path);
    manifest.write(g.train.out);
    std::cout << csv.str();
    return 0;
}

// ----------------------------------------------------- cmd: compare-samplers

int cmd_compare_samplers(const GridArgs& g) {
    Manifest manifest;
    manifest.command = "compare-samplers";
    manifest.seed = static_cast<std::uint64_t>(g.train.seed);
    manifest.config = train_config_json(g.train);
    manifest.config["seeds"] = g.seeds;
    fs::create_directories(g.train.out);

    Prepared prep = load_prepared(g.train.data, manifest);
    ModelParams start = starting_params(prep, g.train, manifest, nullptr);

    std::ostringstream csv;
    csv << "sampler,mean_seconds,mean_map\n";
    for (const char* name : {"cycle", "unweighted", "nested"}) {
        double sum_map = 0.0, sum_sec = 0.0;
        for (int k = 0; k < g.seeds; ++k) {
            TrainArgs cell = g.train;
            cell.method = "dallmi";
            cell.sampler = name;
            ModelParams params = start;
            MetricsLog log = run_target_phase(prep, cell, params,
                                              static_cast<std::uint64_t>(cell.seed) + 1 +
                                                  static_cast<std::uint64_t>(k));
            sum_map += log.records.back().map;
            sum_sec += log.total_seconds();
        }
        csv << name << "," << fmt_map(sum_sec / g.seeds) << "," << fmt_map(sum_map / g.seeds)
            << "\n";
    }

    std::string path = (fs::path(g.train.out) / "samplers.csv").string();
    write_file(path, csv.str());
    manifest.add_output(path);
    manifest.write(g.train.out);
    std::cout << csv.str();
    return 0;
}

// -------------------------------------------------------------------- wiring

void require_seed(std::int64_t seed) {
    if (seed < 0)
        throw CLI::ValidationError("--seed", "a non-negative seed is required (flag or config)");
}

void add_common_train_flags(CLI::App* cmd, TrainArgs& a) {
    cmd->add_option("--data", a.data, "prepared dataset directory");
    cmd->add_option("--epochs", a.epochs, "training epochs")->check(CLI::PositiveNumber);
    cmd->add_option("--source-epochs", a.source_epochs,
                    "source-pretraining epochs (default: same as --epochs)");
    cmd->add_option("--lr", a.lr, "learning rate");
    cmd->add_option("--batch-size", a.batch_size, "batch size")->check(CLI::PositiveNumber);
    cmd->add_option("--dim", a.dim, "model width")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", a.seed, "RNG seed (required)");
    cmd->add_option("--init-checkpoint", a.init_checkpoint,
                    "start from this checkpoint instead of source pretraining");
    cmd->add_flag("--skip-source", a.skip_source, "skip the source-pretraining phase");
    cmd->add_option("--out", a.out, "output directory");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dallmi: PU-learning domain adaptation for multi-label text classifiers"};
    app.require_subcommand(1);

    PrepareArgs pa;
    TrainArgs ta;
    EvalArgs ea;
    GridArgs ga, ca;
    std::string config_path;

    CLI::App* prepare = app.add_subcommand("prepare", "build train/test splits (+ ablation)");
    prepare->add_option("--config", config_path, "flat JSON config file");
    prepare->add_option("--input", pa.input, "input corpus (JSONL or CSV)");
    prepare->add_option("--format", pa.format, "input format: jsonl|csv")
        ->check(CLI::IsMember({"jsonl", "csv"}));
    prepare->add_flag("--synthetic", pa.synthetic, "generate the two-domain synthetic corpus");
    prepare->add_option("--synthetic-n", pa.synth_n, "synthetic samples per domain");
    prepare->add_option("--synthetic-labels", pa.synth_labels, "synthetic label count");
    prepare->add_option("--synthetic-vocab", pa.synth_vocab, "synthetic vocabulary size");
    prepare->add_option("--max-len", pa.max_len, "token sequence length");
    prepare->add_option("--min-freq", pa.min_freq, "vocabulary frequency cutoff");
    prepare->add_option("--keep-ratio", pa.keep_ratio,
                        "probability a positive annotation survives ablation");
    prepare->add_option("--train-frac", pa.train_frac, "train split fraction");
    prepare->add_option("--seed", pa.seed, "RNG seed (required)");
    prepare->add_option("--out", pa.out, "output directory");

    CLI::App* train_cmd = app.add_subcommand("train", "source-pretrain and adapt a classifier");
    train_cmd->add_option("--config", config_path, "flat JSON config file");
    train_cmd->add_option("--method", ta.method, "dallmi | bce | none")
        ->check(CLI::IsMember({"dallmi", "bce", "none"}));
    CLI::Option* o_variant = train_cmd->add_option("--variant", ta.variant, "norm | log")
                                 ->check(CLI::IsMember({"norm", "log"}));
    CLI::Option* o_stage =
        train_cmd->add_option("--stage", ta.stage, "word | encoding | sentence")
            ->check(CLI::IsMember({"word", "encoding", "sentence"}));
    CLI::Option* o_sampler =
        train_cmd->add_option("--sampler", ta.sampler, "cycle | unweighted | nested")
            ->check(CLI::IsMember({"cycle", "unweighted", "nested"}));
    CLI::Option* o_lambda = train_cmd->add_option("--lambda", ta.lambda, "MixUp weight");
    CLI::Option* o_alpha = train_cmd->add_option("--alpha", ta.alpha, "Beta distribution alpha");
    CLI::Option* o_beta = train_cmd->add_option("--beta", ta.beta, "Beta distribution beta");
    train_cmd->add_option("--nested-inner", ta.nested_inner,
                          "positive mini-batch size for the nested sampler");
    add_common_train_flags(train_cmd, ta);

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    eval_cmd->add_option("--config", config_path, "flat JSON config file");
    eval_cmd->add_option("--checkpoint", ea.checkpoint, "model checkpoint");
    eval_cmd->add_option("--data", ea.data, "prepared dataset directory");
    eval_cmd->add_option("--split", ea.split,
                         "target_test | target_train | source_test | source_train");
    eval_cmd->add_option("--out", ea.out, "output directory");

    CLI::App* ablate_cmd =
        app.add_subcommand("ablate", "interpolation-stage / loss-variant grid");
    ablate_cmd->add_option("--config", config_path, "flat JSON config file");
    ablate_cmd->add_option("--grid", ga.grid, "stage | variant")
        ->check(CLI::IsMember({"stage", "variant"}));
    ablate_cmd->add_option("--seeds", ga.seeds, "seeds per grid cell")
        ->check(CLI::PositiveNumber);
    ablate_cmd->add_option("--variant", ga.train.variant, "loss variant for the stage grid")
        ->check(CLI::IsMember({"norm", "log"}));
    ablate_cmd->add_option("--lambda", ga.train.lambda, "MixUp weight");
    ablate_cmd->add_option("--alpha", ga.train.alpha, "Beta distribution alpha");
    ablate_cmd->add_option("--beta", ga.train.beta, "Beta distribution beta");
    add_common_train_flags(ablate_cmd, ga.train);

    CLI::App* compare_cmd =
        app.add_subcommand("compare-samplers", "cycle/unweighted/nested timing and quality");
    compare_cmd->add_option("--config", config_path, "flat JSON config file");
    compare_cmd->add_option("--seeds", ca.seeds, "seeds per sampler")
        ->check(CLI::PositiveNumber);
    compare_cmd->add_option("--nested-inner", ca.train.nested_inner,
                            "positive mini-batch size for the nested sampler");
    compare_cmd->add_option("--lambda", ca.train.lambda, "MixUp weight");
    add_common_train_flags(compare_cmd, ca.train);

    try {
        app.parse(argc, argv);
        CLI::App* sub = app.get_subcommands().front();
        if (!config_path.empty()) apply_config(*sub, config_path);

        if (sub == prepare) {
            require_seed(pa.seed);
            if (!pa.synthetic && pa.input.empty())
                throw CLI::ValidationError("--input",
                                           "either --input or --synthetic is required");
            if (pa.synthetic && !pa.input.empty())
                throw CLI::ValidationError("--input", "--input conflicts with --synthetic");
            if (pa.out.empty()) pa.out = (fs::path(default_out_root()) / "prepare").string();
            return cmd_prepare(pa);
        }
        if (sub == train_cmd) {
            require_seed(ta.seed);
            if (ta.data.empty()) throw CLI::ValidationError("--data", "required");
            if (ta.method.empty()) throw CLI::ValidationError("--method", "required");
            if (ta.method != "dallmi")
                for (CLI::Option* o : {o_variant, o_stage, o_sampler, o_lambda, o_alpha, o_beta})
                    if (o->count() > 0)
                        throw CLI::ValidationError(
                            o->get_name(), "only applies to --method dallmi");
            if (ta.out.empty()) ta.out = (fs::path(default_out_root()) / "train").string();
            return cmd_train(ta);
        }
        if (sub == eval_cmd) {
            if (ea.checkpoint.empty()) throw CLI::ValidationError("--checkpoint", "required");
            if (ea.data.empty()) throw CLI::ValidationError("--data", "required");
            if (ea.out.empty()) ea.out = (fs::path(default_out_root()) / "eval").string();
            return cmd_eval(ea);
        }
        if (sub == ablate_cmd) {
            require_seed(ga.train.seed);
            if (ga.train.data.empty()) throw CLI::ValidationError("--data", "required");
            if (ga.train.out.empty())
                ga.train.out = (fs::path(default_out_root()) / "ablate").string();
            return cmd_ablate(ga);
        }
        if (sub == compare_cmd) {
            require_seed(ca.train.seed);
            if (ca.train.data.empty()) throw CLI::ValidationError("--data", "required");
            if (ca.train.out.empty())
                ca.train.out = (fs::path(default_out_root()) / "compare-samplers").string();
            return cmd_compare_samplers(ca);
        }
        return 1;  // unreachable: a subcommand is required
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const TrainingError& e) {
        std::cerr << "training error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
