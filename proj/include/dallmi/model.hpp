#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dallmi/tape.hpp"
#include "dallmi/tensor.hpp"

namespace dallmi {

struct ModelConfig {
    std::size_t vocab_size = 2000;
    std::size_t dim = 64;
    std::size_t num_labels = 2;
    std::size_t max_len = 128;

    bool operator==(const ModelConfig&) const = default;
};

// All trainable tensors, addressed by name so the optimizer and checkpoints
// can treat them uniformly.
struct ModelParams {
    ModelConfig config;
    std::map<std::string, Tensor> tensors;
};

// weights ~ uniform(-1/sqrt(d), 1/sqrt(d)), biases 0, layer-norm gains 1
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

enum class Stage { Word, Encoding, Sentence };
const char* stage_name(Stage s);
Stage stage_from_string(const std::string& s);

struct StageRepr {
    Stage stage;
    NodeId node;                      // (T x d) for word/encoding, (1 x d) for sentence
    std::vector<unsigned char> mask;  // non-PAD positions (empty for sentence)
};

// Binds one ModelParams onto one tape so a training step can read gradients
// back off the parameter leaves. Rebuilt per step (define-by-run).
class ModelGraph {
public:
    ModelGraph(Tape& tape, const ModelParams& params);

    StageRepr embed(const std::vector<int>& tokens) const;
    StageRepr encode(const StageRepr& word) const;
    StageRepr pool(const StageRepr& encoding) const;
    NodeId classify(const StageRepr& sentence) const;  // (1 x L) logits
    NodeId forward(const std::vector<int>& tokens) const;
    NodeId forward_from(const StageRepr& repr) const;

    NodeId param(const std::string& name) const;
    const std::map<std::string, NodeId>& param_nodes() const { return nodes_; }
    const ModelConfig& config() const { return cfg_; }
    Tape& tape() const { return *tape_; }

private:
    Tape* tape_;
    ModelConfig cfg_;
    std::map<std::string, NodeId> nodes_;
    NodeId posenc_;  // constant sinusoidal (max_len x d)
};

// Sinusoidal position encodings, deterministic in (max_len, d).
Tensor position_encodings(std::size_t max_len, std::size_t d);

// Convenience: untracked forward pass returning per-label sigmoid probabilities.
std::vector<double> predict_probs(const ModelParams& params, const std::vector<int>& tokens);

}  // namespace dallmi
