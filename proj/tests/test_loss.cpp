#include <cmath>
#include <random>

#include "doctest.h"
#include "dallmi/loss.hpp"

using namespace dallmi;

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

NodeId scalar_leaf(Tape& tape, double v) { return tape.leaf(Tensor::scalar(v)); }

// Tiny model + dataset shared by the integration-level cases.
const ModelConfig kCfg{16, 4, 3, 4};

PUDataset tiny_dataset() {
    PUDataset ds;
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> pick(2, 15);
    std::vector<std::vector<int>> labels = {
        {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0}, {0, 0, 0}, {0, 1, 1},
    };
    for (std::size_t i = 0; i < labels.size(); ++i) {
        Sample s;
        s.id = static_cast<int>(i);
        s.tokens = {pick(rng), pick(rng), pick(rng), 0};
        ds.samples.push_back(s);
        ds.labels.push_back(labels[i]);
    }
    return ds;
}

Batch whole_batch(const PUDataset& ds) {
    Batch b;
    for (std::size_t i = 0; i < ds.n(); ++i) b.indices.push_back(static_cast<int>(i));
    fill_partitions(b, ds);
    return b;
}

}  // namespace

TEST_CASE("beta_draw") {
    std::mt19937_64 rng(1);
    SUBCASE("support and determinism") {
        std::vector<double> a, b;
        std::mt19937_64 r1(5), r2(5);
        for (int i = 0; i < 1000; ++i) {
            double m = beta_draw(0.3, 0.3, r1);
            CHECK(m > 0.0);
            CHECK(m < 1.0);
            a.push_back(m);
            b.push_back(beta_draw(0.3, 0.3, r2));
        }
        CHECK(a == b);
    }
    SUBCASE("sample mean near alpha/(alpha+beta)") {
        double sum = 0.0;
        const int n = 20000;
        for (int i = 0; i < n; ++i) sum += beta_draw(2.0, 6.0, rng);
        CHECK(sum / n == doctest::Approx(0.25).epsilon(0.03));
    }
}

TEST_CASE("variational_loss_label hand values") {
    Tape tape;
    // sigmoid(logit(p)) recovers p, so the loss reduces to known arithmetic
    std::vector<NodeId> u = {scalar_leaf(tape, logit(0.2)), scalar_leaf(tape, logit(0.4))};
    std::vector<NodeId> p = {scalar_leaf(tape, logit(0.8))};

    SUBCASE("norm: mean(sigma u) - mean(sigma p) = 0.3 - 0.8") {
        auto loss = variational_loss_label(tape, u, p, LossVariant::Norm);
        REQUIRE(loss.has_value());
        CHECK(tape.scalar_value(*loss) == doctest::Approx(-0.5).epsilon(1e-12));
    }
    SUBCASE("log: log(mean sigma u) - mean(log sigma p)") {
        auto loss = variational_loss_label(tape, u, p, LossVariant::Log);
        REQUIRE(loss.has_value());
        CHECK(tape.scalar_value(*loss) ==
              doctest::Approx(std::log(0.3) - std::log(0.8)).epsilon(1e-12));
    }
    SUBCASE("identical distributions, norm loss zero") {
        std::vector<NodeId> same = {scalar_leaf(tape, logit(0.8))};
        auto loss = variational_loss_label(tape, same, same, LossVariant::Norm);
        REQUIRE(loss.has_value());
        CHECK(tape.scalar_value(*loss) == 0.0);
    }
    SUBCASE("empty U degenerate, empty P rejected") {
        CHECK(!variational_loss_label(tape, {}, p, LossVariant::Norm).has_value());
        CHECK_THROWS_AS(variational_loss_label(tape, u, {}, LossVariant::Norm),
                        std::invalid_argument);
    }
}

TEST_CASE("variational loss is permutation invariant and monotone") {
    Tape tape;
    std::vector<NodeId> u = {scalar_leaf(tape, -0.9), scalar_leaf(tape, 0.4),
                             scalar_leaf(tape, 1.7)};
    std::vector<NodeId> u_perm = {u[2], u[0], u[1]};
    std::vector<NodeId> p = {scalar_leaf(tape, 0.2), scalar_leaf(tape, 1.1)};

    for (LossVariant v : {LossVariant::Norm, LossVariant::Log}) {
        CAPTURE(variant_name(v));
        double base = tape.scalar_value(*variational_loss_label(tape, u, p, v));
        double perm = tape.scalar_value(*variational_loss_label(tape, u_perm, p, v));
        CHECK(base == doctest::Approx(perm).epsilon(1e-14));

        // raising a positive logit can only lower the loss
        std::vector<NodeId> p_hi = {p[0], scalar_leaf(tape, 3.0)};
        double better = tape.scalar_value(*variational_loss_label(tape, u, p_hi, v));
        CHECK(better < base);
    }
}

TEST_CASE("variational loss gradients match finite differences") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    for (LossVariant v : {LossVariant::Norm, LossVariant::Log}) {
        Tensor point({5}, {dist(rng), dist(rng), dist(rng), dist(rng), dist(rng)});
        double err = grad_check(
            [v](Tape& t, NodeId x) {
                std::vector<NodeId> u = {t.pick(x, 0), t.pick(x, 1), t.pick(x, 2)};
                std::vector<NodeId> p = {t.pick(x, 3), t.pick(x, 4)};
                return *variational_loss_label(t, u, p, v);
            },
            point, 1e-3);
        CHECK(err <= 1e-4);
    }
}

TEST_CASE("mixup term boundaries") {
    ModelParams params = init_params(kCfg, 21);
    PUDataset ds = tiny_dataset();
    MixupConfig cfg;

    for (Stage stage : {Stage::Word, Stage::Encoding, Stage::Sentence}) {
        CAPTURE(stage_name(stage));
        cfg.stage = stage;
        Tape tape;
        ModelGraph g(tape, params);
        SampleForward u = run_forward(g, ds.samples[4].tokens);
        SampleForward p = run_forward(g, ds.samples[0].tokens);

        SUBCASE("mu=0 mixes to the unlabeled sample, term exactly zero") {
            MixupDraw draw;
            NodeId term = mixup_term_from_reprs(g, u, p, 0, 0.0, cfg, draw);
            CHECK(tape.scalar_value(term) == 0.0);
            double u_prob = stable_sigmoid(tape.value(u.logits)[0]);
            CHECK(draw.mixed_prob == u_prob);
            CHECK(draw.target == u_prob);
        }
        SUBCASE("mu=1 mixes to the positive sample, target exactly one") {
            MixupDraw draw;
            NodeId term = mixup_term_from_reprs(g, u, p, 0, 1.0, cfg, draw);
            CHECK(draw.target == 1.0);
            CHECK(draw.mixed_prob == stable_sigmoid(tape.value(p.logits)[0]));
            CHECK(tape.scalar_value(term) ==
                  doctest::Approx((1.0 - draw.mixed_prob) * (1.0 - draw.mixed_prob))
                      .epsilon(1e-12));
        }
        SUBCASE("interior mu matches the straight-line recomputation") {
            MixupDraw draw;
            NodeId term = mixup_term_from_reprs(g, u, p, 1, 0.37, cfg, draw);
            double u_prob = stable_sigmoid(tape.value(u.logits)[1]);
            double target = 0.37 * 1.0 + 0.63 * u_prob;
            CHECK(draw.target == doctest::Approx(target).epsilon(1e-12));
            double expect = (target - draw.mixed_prob) * (target - draw.mixed_prob);
            CHECK(tape.scalar_value(term) == doctest::Approx(expect).epsilon(1e-12));
        }
    }
}

TEST_CASE("mixup log variant squares the log-space gap") {
    ModelParams params = init_params(kCfg, 22);
    PUDataset ds = tiny_dataset();
    MixupConfig cfg;
    cfg.variant = LossVariant::Log;

    Tape tape;
    ModelGraph g(tape, params);
    SampleForward u = run_forward(g, ds.samples[1].tokens);
    SampleForward p = run_forward(g, ds.samples[3].tokens);
    MixupDraw draw;
    NodeId term = mixup_term_from_reprs(g, u, p, 0, 0.5, cfg, draw);
    double gap = std::log(draw.target) - std::log(draw.mixed_prob);
    CHECK(tape.scalar_value(term) == doctest::Approx(gap * gap).epsilon(1e-12));
}

TEST_CASE("mixup target carries no gradient") {
    // push every parameter gradient through the term; the target path must not
    // contribute, so gradients equal those of (c - p~)^2 with c frozen
    ModelParams params = init_params(kCfg, 23);
    PUDataset ds = tiny_dataset();
    MixupConfig cfg;

    Tape tape;
    ModelGraph g(tape, params);
    SampleForward u = run_forward(g, ds.samples[2].tokens);
    SampleForward p = run_forward(g, ds.samples[5].tokens);
    MixupDraw draw;
    NodeId term = mixup_term_from_reprs(g, u, p, 2, 0.4, cfg, draw);
    tape.backward(term);
    Tensor head_grad = tape.grad(g.param_nodes().at("head_w"));

    // finite differences on the full recomputation, holding the target at the
    // base point's value
    double target0 = draw.target;
    auto value_at = [&](const ModelParams& pp) {
        Tape t2;
        ModelGraph g2(t2, pp);
        SampleForward u2 = run_forward(g2, ds.samples[2].tokens);
        SampleForward p2 = run_forward(g2, ds.samples[5].tokens);
        MixupDraw d2;
        mixup_term_from_reprs(g2, u2, p2, 2, 0.4, cfg, d2);
        return (target0 - d2.mixed_prob) * (target0 - d2.mixed_prob);
    };
    double h = 1e-4;
    for (std::size_t i = 0; i < head_grad.numel(); ++i) {
        ModelParams plus = params, minus = params;
        plus.tensors["head_w"][i] += h;
        minus.tensors["head_w"][i] -= h;
        double numeric = (value_at(plus) - value_at(minus)) / (2.0 * h);
        CHECK(std::fabs(head_grad[i] - numeric) /
                  std::max(1.0, std::fabs(head_grad[i])) <=
              1e-4);
    }
}

TEST_CASE("total_loss") {
    ModelParams params = init_params(kCfg, 31);
    PUDataset ds = tiny_dataset();
    Batch batch = whole_batch(ds);
    MixupConfig cfg;

    SUBCASE("total equals the per-label sum and respects lambda") {
        for (double lambda : {1.0, 0.25}) {
            cfg.lambda = lambda;
            Tape tape;
            ModelGraph g(tape, params);
            std::mt19937_64 rng(41);
            LossBreakdown out = total_loss(g, ds, batch, cfg, rng);
            CHECK(out.skipped_labels.empty());
            double sum = 0.0;
            for (std::size_t l = 0; l < ds.num_labels(); ++l)
                sum += out.var[l] + lambda * out.mix[l];
            CHECK(out.total == doctest::Approx(sum).epsilon(1e-12));
            CHECK(out.total == tape.scalar_value(out.total_node));
        }
    }
    SUBCASE("lambda=0 leaves only the variational part") {
        cfg.lambda = 0.0;
        Tape tape;
        ModelGraph g(tape, params);
        std::mt19937_64 rng(42);
        LossBreakdown out = total_loss(g, ds, batch, cfg, rng);
        double var_sum = 0.0;
        for (double v : out.var) var_sum += v;
        CHECK(out.total == doctest::Approx(var_sum).epsilon(1e-12));
    }
    SUBCASE("same rng state, identical breakdown") {
        Tape t1, t2;
        ModelGraph g1(t1, params), g2(t2, params);
        std::mt19937_64 r1(43), r2(43);
        LossBreakdown a = total_loss(g1, ds, batch, cfg, r1);
        LossBreakdown b = total_loss(g2, ds, batch, cfg, r2);
        CHECK(a.total == b.total);
        CHECK(a.var == b.var);
        CHECK(a.mix == b.mix);
        REQUIRE(a.draws.size() == b.draws.size());
        for (std::size_t i = 0; i < a.draws.size(); ++i) {
            CHECK(a.draws[i].mu == b.draws[i].mu);
            CHECK(a.draws[i].u_index == b.draws[i].u_index);
            CHECK(a.draws[i].p_index == b.draws[i].p_index);
        }
    }
    SUBCASE("label without positives is skipped, not fatal") {
        PUDataset no2 = ds;
        for (auto& row : no2.labels) row[2] = 0;
        Batch b2 = whole_batch(no2);
        Tape tape;
        ModelGraph g(tape, params);
        std::mt19937_64 rng(44);
        LossBreakdown out = total_loss(g, no2, b2, cfg, rng);
        CHECK(out.skipped_labels == std::vector<std::size_t>{2});
        CHECK(out.var[2] == 0.0);
        CHECK(out.mix[2] == 0.0);
    }
    SUBCASE("all labels degenerate throws") {
        PUDataset none = ds;
        for (auto& row : none.labels) row = {0, 0, 0};
        Batch b2 = whole_batch(none);
        Tape tape;
        ModelGraph g(tape, params);
        std::mt19937_64 rng(45);
        CHECK_THROWS_AS(total_loss(g, none, b2, cfg, rng), DegenerateBatchError);
    }
    SUBCASE("drawn pairs come from the right partitions") {
        Tape tape;
        ModelGraph g(tape, params);
        std::mt19937_64 rng(46);
        LossBreakdown out = total_loss(g, ds, batch, cfg, rng);
        REQUIRE(out.draws.size() == ds.num_labels());
        for (std::size_t l = 0; l < ds.num_labels(); ++l) {
            CHECK(ds.labels[out.draws[l].p_index][l] == 1);
            CHECK(ds.labels[out.draws[l].u_index][l] == 0);
        }
    }
}

TEST_CASE("total_loss gradient matches finite differences") {
    ModelConfig cfg_small{12, 3, 2, 4};
    ModelParams params = init_params(cfg_small, 51);
    PUDataset ds = tiny_dataset();
    for (auto& row : ds.labels) row.resize(2);
    for (auto& s : ds.samples)
        for (int& t : s.tokens)
            if (t >= 12) t = 2 + t % 10;
    Batch batch = whole_batch(ds);
    MixupConfig mcfg;

    Tape tape;
    ModelGraph g(tape, params);
    std::mt19937_64 rng(61);
    LossBreakdown out = total_loss(g, ds, batch, mcfg, rng);
    tape.backward(out.total_node);

    // the MixUp target is a stop-gradient, so the numeric recomputation must
    // hold it at the base point's value while everything else moves
    std::vector<double> target0;
    for (const auto& d : out.draws) target0.push_back(d.target);
    auto loss_at = [&](const ModelParams& pp) {
        Tape t2;
        ModelGraph g2(t2, pp);
        std::mt19937_64 r2(61);  // same pair picks and mu at every point
        LossBreakdown lb = total_loss(g2, ds, batch, mcfg, r2);
        double total = 0.0;
        for (std::size_t l = 0; l < lb.var.size(); ++l) {
            double gap = target0[l] - lb.draws[l].mixed_prob;
            total += lb.var[l] + mcfg.lambda * gap * gap;
        }
        return total;
    };

    double h = 1e-4;
    double worst = 0.0;
    for (const auto& [name, node] : g.param_nodes()) {
        const Tensor& analytic = tape.grad(node);
        for (std::size_t i = 0; i < analytic.numel(); ++i) {
            ModelParams plus = params, minus = params;
            plus.tensors[name][i] += h;
            minus.tensors[name][i] -= h;
            double numeric = (loss_at(plus) - loss_at(minus)) / (2.0 * h);
            worst = std::max(worst, std::fabs(analytic[i] - numeric) /
                                        std::max(1.0, std::fabs(analytic[i])));
        }
    }
    CHECK(worst <= 1e-4);
}

TEST_CASE("bce_loss") {
    SUBCASE("logit 0 against target 0 costs ln 2") {
        Tape tape;
        NodeId logits = tape.leaf(Tensor({1, 2}, {0.0, 0.0}));
        NodeId loss = bce_loss(tape, {logits}, {{0, 0}});
        CHECK(tape.scalar_value(loss) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    }
    SUBCASE("confident correct prediction costs almost nothing") {
        Tape tape;
        NodeId logits = tape.leaf(Tensor({1, 1}, {20.0}));
        NodeId loss = bce_loss(tape, {logits}, {{1}});
        CHECK(tape.scalar_value(loss) ==
              doctest::Approx(std::log1p(std::exp(-20.0))).epsilon(1e-9));
    }
    SUBCASE("mean over samples and labels") {
        Tape tape;
        NodeId a = tape.leaf(Tensor({1, 2}, {0.0, 0.0}));
        NodeId b = tape.leaf(Tensor({1, 2}, {0.0, 0.0}));
        NodeId loss = bce_loss(tape, {a, b}, {{0, 1}, {1, 1}});
        CHECK(tape.scalar_value(loss) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    }
    SUBCASE("finite at extreme logits") {
        Tape tape;
        NodeId logits = tape.leaf(Tensor({1, 2}, {700.0, -700.0}));
        NodeId loss = bce_loss(tape, {logits}, {{0, 1}});
        CHECK(std::isfinite(tape.scalar_value(loss)));
        CHECK(tape.scalar_value(loss) == doctest::Approx(700.0).epsilon(1e-9));
    }
}
