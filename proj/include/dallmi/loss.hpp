#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "dallmi/batching.hpp"
#include "dallmi/model.hpp"
#include "dallmi/tape.hpp"

namespace dallmi {

// No label in the batch had both a positive and an unlabeled member.
struct DegenerateBatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class LossVariant { Norm, Log };
const char* variant_name(LossVariant v);
LossVariant variant_from_string(const std::string& s);

struct MixupConfig {
    double alpha = 0.3;
    double beta = 0.3;
    double lambda = 1.0;
    Stage stage = Stage::Word;
    LossVariant variant = LossVariant::Norm;

    void validate() const;
};

struct MixupDraw {
    double mu = 0.0;
    int u_index = -1;
    int p_index = -1;
    NodeId mixed_repr = -1;
    double target = 0.0;      // interpolated output, constant w.r.t. gradients
    double mixed_prob = 0.0;  // sigmoid of the mixed representation's label logit
};

struct LossBreakdown {
    std::vector<double> var;           // per label, 0 for skipped
    std::vector<double> mix;           // per label, 0 for skipped
    double total = 0.0;
    NodeId total_node = -1;
    std::vector<std::size_t> skipped_labels;
    std::vector<MixupDraw> draws;      // per non-skipped label
};

// mu ~ Beta(alpha, beta) via two gamma draws.
double beta_draw(double alpha, double beta, std::mt19937_64& rng);

// Per-label variational loss over scalar logit nodes already on the tape.
// norm: mean(sigma(u)) - mean(|sigma(p)|); log: log(mean(sigma(u))) -
// mean(log(sigma(p))). Empty U is degenerate (nullopt) so the caller can
// skip the label; empty P is a contract violation.
std::optional<NodeId> variational_loss_label(Tape& tape, const std::vector<NodeId>& u_logits,
                                             const std::vector<NodeId>& p_logits,
                                             LossVariant variant);

// All stage representations and logits of one sample's forward pass,
// cached so per-label loss terms share it.
struct SampleForward {
    StageRepr word;
    StageRepr encoding;
    StageRepr sentence;
    NodeId logits;
};

SampleForward run_forward(const ModelGraph& graph, const std::vector<int>& tokens);

// MixUp consistency term for one (s_u, s_p) pair at a fixed mu:
// e~ = mu*e_p + (1-mu)*e_u; p~ = sigma(logit_l(forward_from(e~)));
// target = mu*1 + (1-mu)*sigma(logit_l(s_u)), held constant.
// norm: (target - p~)^2 ; log: (log target - log p~)^2.
NodeId mixup_term_from_reprs(const ModelGraph& graph, const SampleForward& u,
                             const SampleForward& p, std::size_t label, double mu,
                             const MixupConfig& cfg, MixupDraw& draw);

// Convenience form drawing mu itself.
std::pair<NodeId, MixupDraw> mixup_term_label(const ModelGraph& graph,
                                              const std::vector<int>& u_tokens,
                                              const std::vector<int>& p_tokens,
                                              std::size_t label, const MixupConfig& cfg,
                                              std::mt19937_64& rng);

// Full per-batch loss: per label, variational term over the batch partitions
// plus one MixUp pair, summed as total = sum_l (var_l + lambda * mix_l).
// Labels with an empty partition are skipped and recorded.
LossBreakdown total_loss(const ModelGraph& graph, const PUDataset& ds, const Batch& batch,
                         const MixupConfig& cfg, std::mt19937_64& rng);

// Mean stable BCE over per-sample logit nodes against 0/1 target rows.
NodeId bce_loss(Tape& tape, const std::vector<NodeId>& per_sample_logits,
                const std::vector<std::vector<int>>& targets);

}  // namespace dallmi
