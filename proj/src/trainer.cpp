#include "dallmi/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace dallmi {

using nlohmann::json;

namespace {
constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;
}  // namespace

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be > 0");
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (eval_every < 1) throw std::invalid_argument("TrainConfig: eval_every must be >= 1");
    mixup.validate();
}

bool adam_step(ModelParams& params, const std::map<std::string, Tensor>& grads,
               AdamState& state, double lr) {
    for (const auto& [name, g] : grads)
        if (!g.all_finite()) {
            ++state.step;
            ++state.rejected;
            return false;
        }
    ++state.step;
    double t = static_cast<double>(state.step);
    double bc1 = 1.0 - std::pow(kBeta1, t);
    double bc2 = 1.0 - std::pow(kBeta2, t);
    for (const auto& [name, g] : grads) {
        Tensor& p = params.tensors.at(name);
        Tensor& m = state.m.try_emplace(name, Tensor::zeros(p.shape)).first->second;
        Tensor& v = state.v.try_emplace(name, Tensor::zeros(p.shape)).first->second;
        for (std::size_t i = 0; i < p.numel(); ++i) {
            m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
            v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + kEps);
        }
    }
    return true;
}

std::vector<std::vector<double>> score_dataset(const ModelParams& params, const PUDataset& ds) {
    std::vector<std::vector<double>> scores;
    scores.reserve(ds.n());
    for (const auto& s : ds.samples) scores.push_back(predict_probs(params, s.tokens));
    return scores;
}

double evaluate_map(const ModelParams& params, const PUDataset& test) {
    const auto& truth = test.has_full_labels() ? test.full_labels : test.labels;
    return mean_average_precision(score_dataset(params, test), truth).map;
}

namespace {

std::string batch_debug(const Batch& batch) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < batch.indices.size(); ++i)
        os << (i ? "," : "") << batch.indices[i];
    os << "]";
    return os.str();
}

std::map<std::string, Tensor> collect_grads(const ModelGraph& graph) {
    std::map<std::string, Tensor> grads;
    for (const auto& [name, node] : graph.param_nodes())
        grads[name] = graph.tape().grad(node);
    return grads;
}

}  // namespace

MetricsLog train(const SplitPair& data, const TrainConfig& cfg, ModelParams& params) {
    cfg.validate();
    if (data.train.num_labels() != params.config.num_labels)
        throw TrainingError("train: dataset label count " +
                            std::to_string(data.train.num_labels()) +
                            " != model label count " +
                            std::to_string(params.config.num_labels));

    std::mt19937_64 rng(cfg.seed);
    AdamState adam;
    MetricsLog log;
    log.records.push_back({0, 0.0, 0.0, 0.0, evaluate_map(params, data.test), 0.0});

    SamplerKind sampler_kind =
        cfg.phase == Phase::SourceSupervised ? SamplerKind::Unweighted : cfg.sampler;
    double last_map = log.records[0].map;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        auto stream = make_sampler(sampler_kind, data.train, cfg.batch_size,
                                   cfg.nested_inner_size,
                                   cfg.seed + 1000003ull * static_cast<std::uint64_t>(epoch));
        double sum_var = 0.0, sum_mix = 0.0, sum_total = 0.0;
        std::size_t batches = 0, rejected = 0;
        Batch batch;
        while (stream->next(batch)) {
            Tape tape;
            ModelGraph graph(tape, params);
            NodeId loss_node = -1;
            double batch_var = 0.0, batch_mix = 0.0;
            if (cfg.phase == Phase::SourceSupervised) {
                std::vector<NodeId> logits;
                std::vector<std::vector<int>> targets;
                for (int idx : batch.indices) {
                    const auto& s = data.train.samples[static_cast<std::size_t>(idx)];
                    logits.push_back(graph.forward(s.tokens));
                    targets.push_back(data.train.labels[static_cast<std::size_t>(idx)]);
                }
                loss_node = bce_loss(tape, logits, targets);
            } else {
                try {
                    LossBreakdown lb = total_loss(graph, data.train, batch, cfg.mixup, rng);
                    loss_node = lb.total_node;
                    for (double v : lb.var) batch_var += v;
                    for (double v : lb.mix) batch_mix += v;
                } catch (const DegenerateBatchError&) {
                    ++rejected;  // every label degenerate in this batch
                    continue;
                }
            }
            double loss = tape.scalar_value(loss_node);
            if (!std::isfinite(loss))
                throw TrainingError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                    ", batch indices " + batch_debug(batch) +
                                    " (replay with the same seed to reproduce)");
            tape.backward(loss_node);
            adam_step(params, collect_grads(graph), adam, cfg.lr);
            sum_var += batch_var;
            sum_mix += batch_mix;
            sum_total += loss;
            ++batches;
        }
        if (batches == 0)
            throw TrainingError("train: all " + std::to_string(rejected) +
                                " batches degenerate at epoch " + std::to_string(epoch));

        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss_var = sum_var / static_cast<double>(batches);
        rec.loss_mix = sum_mix / static_cast<double>(batches);
        rec.loss_total = sum_total / static_cast<double>(batches);
        if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs)
            last_map = evaluate_map(params, data.test);
        rec.map = last_map;
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log.records.push_back(rec);
    }
    return log;
}

namespace {
std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}
}  // namespace

std::string MetricsLog::to_csv(bool deterministic_seconds) const {
    std::ostringstream os;
    os << "epoch,loss_var,loss_mix,loss_total,map,seconds\n";
    for (const auto& r : records)
        os << r.epoch << "," << fmt(r.loss_var) << "," << fmt(r.loss_mix) << ","
           << fmt(r.loss_total) << "," << fmt(r.map) << ","
           << fmt(deterministic_seconds ? 0.0 : r.seconds) << "\n";
    return os.str();
}

std::string MetricsLog::to_json(bool deterministic_seconds) const {
    json j = json::array();
    for (const auto& r : records)
        j.push_back({{"epoch", r.epoch},
                     {"loss_var", r.loss_var},
                     {"loss_mix", r.loss_mix},
                     {"loss_total", r.loss_total},
                     {"map", r.map},
                     {"seconds", deterministic_seconds ? 0.0 : r.seconds}});
    return j.dump(2);
}

double MetricsLog::total_seconds() const {
    double s = 0.0;
    for (const auto& r : records) s += r.seconds;
    return s;
}

void save_checkpoint(const ModelParams& params, const std::string& path) {
    json j;
    j["version"] = 1;
    j["config"] = {{"vocab_size", params.config.vocab_size},
                   {"dim", params.config.dim},
                   {"num_labels", params.config.num_labels},
                   {"max_len", params.config.max_len}};
    json p = json::object();
    for (const auto& [name, t] : params.tensors)
        p[name] = {{"shape", t.shape}, {"data", t.data}};
    j["params"] = std::move(p);
    std::ofstream out(path);
    if (!out) throw DataError("save_checkpoint: cannot write " + path);
    out << j.dump();
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_checkpoint: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("load_checkpoint: parse error in " + path + ": " + e.what());
    }
    try {
        if (j.at("version").get<int>() != 1)
            throw DataError("load_checkpoint: unsupported version");
        ModelParams p;
        const json& c = j.at("config");
        p.config.vocab_size = c.at("vocab_size").get<std::size_t>();
        p.config.dim = c.at("dim").get<std::size_t>();
        p.config.num_labels = c.at("num_labels").get<std::size_t>();
        p.config.max_len = c.at("max_len").get<std::size_t>();
        for (const auto& [name, entry] : j.at("params").items()) {
            auto shape = entry.at("shape").get<std::vector<std::size_t>>();
            auto data = entry.at("data").get<std::vector<double>>();
            p.tensors[name] = Tensor(std::move(shape), std::move(data));  // validates numel
        }
        ModelParams fresh = init_params(p.config, 0);
        for (const auto& [name, t] : fresh.tensors) {
            auto it = p.tensors.find(name);
            if (it == p.tensors.end())
                throw DataError("load_checkpoint: missing tensor " + name);
            if (it->second.shape != t.shape)
                throw DataError("load_checkpoint: tensor " + name + " has shape " +
                                it->second.shape_str() + ", expected " + t.shape_str());
        }
        return p;
    } catch (const json::exception& e) {
        throw DataError("load_checkpoint: malformed checkpoint " + path + ": " + e.what());
    }
}

}  // namespace dallmi
