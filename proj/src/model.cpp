#include "dallmi/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace dallmi {

const char* stage_name(Stage s) {
    switch (s) {
        case Stage::Word: return "word";
        case Stage::Encoding: return "encoding";
        case Stage::Sentence: return "sentence";
    }
    return "?";
}

Stage stage_from_string(const std::string& s) {
    if (s == "word") return Stage::Word;
    if (s == "encoding") return Stage::Encoding;
    if (s == "sentence") return Stage::Sentence;
    throw std::invalid_argument("unknown stage: " + s);
}

namespace {

Tensor uniform_init(std::vector<std::size_t> shape, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-bound, bound);
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = u(rng);
    return t;
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    if (cfg.vocab_size < 1 || cfg.dim < 1 || cfg.num_labels < 1)
        throw std::invalid_argument("init_params: V, d, L must all be >= 1");
    std::mt19937_64 rng(seed);
    double bound = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
    std::size_t d = cfg.dim, h = 4 * cfg.dim;

    ModelParams p;
    p.config = cfg;
    auto& t = p.tensors;
    t["embed"] = uniform_init({cfg.vocab_size, d}, bound, rng);
    for (const char* name : {"wq", "wk", "wv", "wo"})
        t[name] = uniform_init({d, d}, bound, rng);
    t["ln1_g"] = Tensor({d}, std::vector<double>(d, 1.0));
    t["ln1_b"] = Tensor::zeros({d});
    t["ln2_g"] = Tensor({d}, std::vector<double>(d, 1.0));
    t["ln2_b"] = Tensor::zeros({d});
    t["ff1_w"] = uniform_init({d, h}, bound, rng);
    t["ff1_b"] = Tensor::zeros({h});
    t["ff2_w"] = uniform_init({h, d}, bound, rng);
    t["ff2_b"] = Tensor::zeros({d});
    t["pool_w"] = uniform_init({d, d}, bound, rng);
    t["pool_b"] = Tensor::zeros({d});
    t["head_w"] = uniform_init({d, cfg.num_labels}, bound, rng);
    t["head_b"] = Tensor::zeros({cfg.num_labels});
    return p;
}

Tensor position_encodings(std::size_t max_len, std::size_t d) {
    Tensor pe = Tensor::zeros({max_len, d});
    for (std::size_t pos = 0; pos < max_len; ++pos)
        for (std::size_t i = 0; i < d; ++i) {
            double angle = static_cast<double>(pos) /
                           std::pow(10000.0, static_cast<double>(2 * (i / 2)) /
                                                 static_cast<double>(d));
            pe.at(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    return pe;
}

ModelGraph::ModelGraph(Tape& tape, const ModelParams& params)
    : tape_(&tape), cfg_(params.config) {
    for (const auto& [name, tensor] : params.tensors) nodes_[name] = tape_->leaf(tensor);
    posenc_ = tape_->constant(position_encodings(cfg_.max_len, cfg_.dim));
}

NodeId ModelGraph::param(const std::string& name) const {
    auto it = nodes_.find(name);
    if (it == nodes_.end()) throw std::logic_error("ModelGraph: unknown param " + name);
    return it->second;
}

StageRepr ModelGraph::embed(const std::vector<int>& tokens) const {
    if (tokens.size() != cfg_.max_len)
        throw std::invalid_argument("embed: expected " + std::to_string(cfg_.max_len) +
                                    " tokens, got " + std::to_string(tokens.size()));
    std::vector<unsigned char> mask(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] < 0 || static_cast<std::size_t>(tokens[i]) >= cfg_.vocab_size)
            throw std::invalid_argument("embed: token id " + std::to_string(tokens[i]) +
                                        " out of vocab range");
        mask[i] = tokens[i] != 0 ? 1 : 0;  // PAD = 0
    }
    NodeId rows = tape_->gather_rows(param("embed"), tokens);
    NodeId x = tape_->add(rows, posenc_);
    return {Stage::Word, x, std::move(mask)};
}

StageRepr ModelGraph::encode(const StageRepr& word) const {
    if (word.stage != Stage::Word)
        throw std::invalid_argument(std::string("encode: expected word stage, got ") +
                                    stage_name(word.stage));
    Tape& t = *tape_;
    double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg_.dim));

    // pre-norm self-attention with residual
    NodeId a = t.layernorm_rows(word.node, param("ln1_g"), param("ln1_b"));
    NodeId q = t.matmul(a, param("wq"));
    NodeId k = t.matmul(a, param("wk"));
    NodeId v = t.matmul(a, param("wv"));
    NodeId scores = t.scale(t.matmul_bt(q, k), inv_sqrt_d);
    NodeId probs = t.softmax_rows_masked(scores, word.mask);
    NodeId ctx = t.matmul(probs, v);
    NodeId h1 = t.add(word.node, t.matmul(ctx, param("wo")));

    // pre-norm feed-forward with residual; gelu keeps the whole network
    // smooth, which the finite-difference gradient harness relies on
    NodeId f = t.layernorm_rows(h1, param("ln2_g"), param("ln2_b"));
    NodeId ff = t.add_rowvec(t.matmul(t.gelu(t.add_rowvec(t.matmul(f, param("ff1_w")),
                                                           param("ff1_b"))),
                                      param("ff2_w")),
                             param("ff2_b"));
    NodeId h2 = t.add(h1, ff);
    return {Stage::Encoding, h2, word.mask};
}

StageRepr ModelGraph::pool(const StageRepr& encoding) const {
    if (encoding.stage != Stage::Encoding)
        throw std::invalid_argument(std::string("pool: expected encoding stage, got ") +
                                    stage_name(encoding.stage));
    bool any = false;
    for (auto m : encoding.mask)
        if (m) { any = true; break; }
    if (!any) throw std::invalid_argument("pool: all positions are PAD");
    Tape& t = *tape_;
    NodeId mean = t.masked_mean_rows(encoding.node, encoding.mask);
    NodeId sent = t.tanh_(t.add_rowvec(t.matmul(mean, param("pool_w")), param("pool_b")));
    return {Stage::Sentence, sent, {}};
}

NodeId ModelGraph::classify(const StageRepr& sentence) const {
    if (sentence.stage != Stage::Sentence)
        throw std::invalid_argument(std::string("classify: expected sentence stage, got ") +
                                    stage_name(sentence.stage));
    return tape_->add_rowvec(tape_->matmul(sentence.node, param("head_w")), param("head_b"));
}

NodeId ModelGraph::forward(const std::vector<int>& tokens) const {
    return classify(pool(encode(embed(tokens))));
}

NodeId ModelGraph::forward_from(const StageRepr& repr) const {
    switch (repr.stage) {
        case Stage::Word: return classify(pool(encode(repr)));
        case Stage::Encoding: return classify(pool(repr));
        case Stage::Sentence: return classify(repr);
    }
    throw std::logic_error("forward_from: bad stage");
}

std::vector<double> predict_probs(const ModelParams& params, const std::vector<int>& tokens) {
    Tape tape;
    ModelGraph g(tape, params);
    NodeId logits = g.forward(tokens);
    const Tensor& v = tape.value(logits);
    std::vector<double> probs(v.numel());
    for (std::size_t i = 0; i < v.numel(); ++i) probs[i] = stable_sigmoid(v[i]);
    return probs;
}

}  // namespace dallmi
