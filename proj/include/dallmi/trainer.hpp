#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dallmi/batching.hpp"
#include "dallmi/loss.hpp"
#include "dallmi/metrics.hpp"
#include "dallmi/model.hpp"
#include "dallmi/text.hpp"

namespace dallmi {

// The CLI maps this to exit code 3.
struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Phase { SourceSupervised, TargetPU };

struct TrainConfig {
    Phase phase = Phase::TargetPU;
    double lr = 5e-5;
    int epochs = 12;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
    MixupConfig mixup;                         // PU phase
    SamplerKind sampler = SamplerKind::Cycle;  // PU phase; supervised uses unweighted
    std::size_t nested_inner_size = 2;
    int eval_every = 1;

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;
    double loss_var = 0.0;
    double loss_mix = 0.0;
    double loss_total = 0.0;
    double map = 0.0;
    double seconds = 0.0;
};

struct MetricsLog {
    std::vector<EpochRecord> records;

    // Persisted form keeps the schema but zeroes the seconds column so two
    // seeded runs serialize byte-identically; measured timings travel in the
    // run manifest instead.
    std::string to_csv(bool deterministic_seconds = true) const;
    std::string to_json(bool deterministic_seconds = true) const;
    double total_seconds() const;
};

struct AdamState {
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
    long step = 0;
    long rejected = 0;  // non-finite-gradient incidents
};

// Standard Adam with bias correction (beta1 0.9, beta2 0.999, eps 1e-8).
// A non-finite gradient rejects the whole step and records the incident.
// Returns whether the step was applied; the step counter advances either way.
bool adam_step(ModelParams& params, const std::map<std::string, Tensor>& grads,
               AdamState& state, double lr);

// Per-label sigmoid score matrix over a dataset.
std::vector<std::vector<double>> score_dataset(const ModelParams& params, const PUDataset& ds);

double evaluate_map(const ModelParams& params, const PUDataset& test);

// One training phase: supervised BCE (observed labels as 0/1 targets) or the
// per-batch PU objective. Mutates params; returns the per-epoch log with an
// epoch-0 pre-training evaluation row.
MetricsLog train(const SplitPair& data, const TrainConfig& cfg, ModelParams& params);

void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace dallmi
