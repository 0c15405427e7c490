#include "dallmi/loss.hpp"

#include <stdexcept>
#include <unordered_map>

namespace dallmi {

const char* variant_name(LossVariant v) {
    return v == LossVariant::Norm ? "norm" : "log";
}

LossVariant variant_from_string(const std::string& s) {
    if (s == "norm") return LossVariant::Norm;
    if (s == "log") return LossVariant::Log;
    throw std::invalid_argument("unknown loss variant: " + s);
}

void MixupConfig::validate() const {
    if (!(alpha > 0.0) || !(beta > 0.0))
        throw std::invalid_argument("MixupConfig: alpha and beta must be > 0");
    if (lambda < 0.0) throw std::invalid_argument("MixupConfig: lambda must be >= 0");
}

double beta_draw(double alpha, double beta, std::mt19937_64& rng) {
    std::gamma_distribution<double> ga(alpha, 1.0);
    std::gamma_distribution<double> gb(beta, 1.0);
    double x = ga(rng);
    double y = gb(rng);
    if (x + y == 0.0) return 0.5;
    return x / (x + y);
}

std::optional<NodeId> variational_loss_label(Tape& tape, const std::vector<NodeId>& u_logits,
                                             const std::vector<NodeId>& p_logits,
                                             LossVariant variant) {
    if (p_logits.empty())
        throw std::invalid_argument("variational_loss_label: empty positive set");
    if (u_logits.empty()) return std::nullopt;

    std::vector<NodeId> u_terms, p_terms;
    u_terms.reserve(u_logits.size());
    p_terms.reserve(p_logits.size());
    if (variant == LossVariant::Norm) {
        for (NodeId id : u_logits) u_terms.push_back(tape.sigmoid(id));
        for (NodeId id : p_logits) p_terms.push_back(tape.abs_(tape.sigmoid(id)));
        return tape.sub(tape.mean_of(u_terms), tape.mean_of(p_terms));
    }
    for (NodeId id : u_logits) u_terms.push_back(tape.sigmoid(id));
    for (NodeId id : p_logits) p_terms.push_back(tape.log_(tape.sigmoid(id)));
    return tape.sub(tape.log_(tape.mean_of(u_terms)), tape.mean_of(p_terms));
}

SampleForward run_forward(const ModelGraph& graph, const std::vector<int>& tokens) {
    SampleForward f{graph.embed(tokens), {}, {}, -1};
    f.encoding = graph.encode(f.word);
    f.sentence = graph.pool(f.encoding);
    f.logits = graph.classify(f.sentence);
    return f;
}

namespace {

const StageRepr& repr_at(const SampleForward& f, Stage stage) {
    switch (stage) {
        case Stage::Word: return f.word;
        case Stage::Encoding: return f.encoding;
        case Stage::Sentence: return f.sentence;
    }
    throw std::logic_error("repr_at: bad stage");
}

std::vector<unsigned char> mask_union(const std::vector<unsigned char>& a,
                                      const std::vector<unsigned char>& b) {
    std::vector<unsigned char> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = (a[i] || b[i]) ? 1 : 0;
    return out;
}

}  // namespace

NodeId mixup_term_from_reprs(const ModelGraph& graph, const SampleForward& u,
                             const SampleForward& p, std::size_t label, double mu,
                             const MixupConfig& cfg, MixupDraw& draw) {
    Tape& tape = graph.tape();
    const StageRepr& rp = repr_at(p, cfg.stage);
    const StageRepr& ru = repr_at(u, cfg.stage);

    StageRepr mixed{cfg.stage, tape.lerp(rp.node, ru.node, mu), mask_union(rp.mask, ru.mask)};
    NodeId mixed_logits = graph.forward_from(mixed);
    NodeId p_tilde = tape.sigmoid(tape.pick(mixed_logits, static_cast<int>(label)));

    // target is the interpolated output, excluded from gradient flow
    double u_prob =
        stable_sigmoid(tape.value(u.logits)[label]);
    double target = mu * 1.0 + (1.0 - mu) * u_prob;
    NodeId target_node = tape.constant(Tensor::scalar(target));

    draw.mu = mu;
    draw.mixed_repr = mixed.node;
    draw.target = target;
    draw.mixed_prob = tape.scalar_value(p_tilde);

    if (cfg.variant == LossVariant::Norm)
        return tape.square(tape.sub(target_node, p_tilde));
    return tape.square(tape.sub(tape.log_(target_node), tape.log_(p_tilde)));
}

std::pair<NodeId, MixupDraw> mixup_term_label(const ModelGraph& graph,
                                              const std::vector<int>& u_tokens,
                                              const std::vector<int>& p_tokens,
                                              std::size_t label, const MixupConfig& cfg,
                                              std::mt19937_64& rng) {
    cfg.validate();
    SampleForward u = run_forward(graph, u_tokens);
    SampleForward p = run_forward(graph, p_tokens);
    double mu = beta_draw(cfg.alpha, cfg.beta, rng);
    MixupDraw draw;
    NodeId term = mixup_term_from_reprs(graph, u, p, label, mu, cfg, draw);
    return {term, draw};
}

LossBreakdown total_loss(const ModelGraph& graph, const PUDataset& ds, const Batch& batch,
                         const MixupConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    Tape& tape = graph.tape();
    std::size_t L = ds.num_labels();
    if (batch.pos.size() != L || batch.unl.size() != L)
        throw std::invalid_argument("total_loss: batch partitions do not match label count");

    // forwards are shared across labels; nested batches may reference
    // positives outside the outer indices, so cache lazily by dataset index
    std::unordered_map<int, SampleForward> cache;
    auto forward_of = [&](int idx) -> const SampleForward& {
        auto it = cache.find(idx);
        if (it == cache.end())
            it = cache.emplace(idx, run_forward(graph,
                                                ds.samples[static_cast<std::size_t>(idx)].tokens))
                     .first;
        return it->second;
    };

    LossBreakdown out;
    out.var.assign(L, 0.0);
    out.mix.assign(L, 0.0);
    NodeId total = -1;
    for (std::size_t l = 0; l < L; ++l) {
        const auto& P = batch.pos[l];
        const auto& U = batch.unl[l];
        if (P.empty() || U.empty()) {
            out.skipped_labels.push_back(l);
            continue;
        }
        std::vector<NodeId> u_logits, p_logits;
        for (int idx : U)
            u_logits.push_back(tape.pick(forward_of(idx).logits, static_cast<int>(l)));
        for (int idx : P)
            p_logits.push_back(tape.pick(forward_of(idx).logits, static_cast<int>(l)));
        NodeId var = *variational_loss_label(tape, u_logits, p_logits, cfg.variant);

        std::uniform_int_distribution<std::size_t> pick_u(0, U.size() - 1);
        std::uniform_int_distribution<std::size_t> pick_p(0, P.size() - 1);
        int u_idx = U[pick_u(rng)];
        int p_idx = P[pick_p(rng)];
        double mu = beta_draw(cfg.alpha, cfg.beta, rng);
        MixupDraw draw;
        draw.u_index = u_idx;
        draw.p_index = p_idx;
        NodeId mix =
            mixup_term_from_reprs(graph, forward_of(u_idx), forward_of(p_idx), l, mu, cfg, draw);

        out.var[l] = tape.scalar_value(var);
        out.mix[l] = tape.scalar_value(mix);
        out.draws.push_back(draw);

        NodeId term = tape.add(var, tape.scale(mix, cfg.lambda));
        total = total < 0 ? term : tape.add(total, term);
    }
    if (total < 0)
        throw DegenerateBatchError("total_loss: all labels degenerate in this batch");
    out.total_node = total;
    out.total = tape.scalar_value(total);
    return out;
}

NodeId bce_loss(Tape& tape, const std::vector<NodeId>& per_sample_logits,
                const std::vector<std::vector<int>>& targets) {
    if (per_sample_logits.size() != targets.size() || per_sample_logits.empty())
        throw std::invalid_argument("bce_loss: logits/targets size mismatch or empty");
    std::vector<NodeId> per_sample;
    per_sample.reserve(per_sample_logits.size());
    for (std::size_t i = 0; i < per_sample_logits.size(); ++i) {
        std::vector<double> t(targets[i].begin(), targets[i].end());
        per_sample.push_back(tape.bce_with_logits(per_sample_logits[i], t));
    }
    return tape.mean_of(per_sample);
}

}  // namespace dallmi
