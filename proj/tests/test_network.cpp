#include <cmath>

#include <doctest.h>

#include "divreg/data.hpp"
#include "divreg/error.hpp"
#include "divreg/gradcheck.hpp"
#include "divreg/linalg.hpp"
#include "divreg/network.hpp"
#include "divreg/rng.hpp"

using namespace divreg;

namespace {

Mlp single_layer(Activation act, Matrix weights, std::vector<double> bias) {
    Layer layer;
    layer.spec = {weights.rows(), weights.cols(), act};
    layer.weights = std::move(weights);
    layer.bias = std::move(bias);
    std::vector<Layer> layers;
    layers.push_back(std::move(layer));
    return Mlp::from_layers(std::move(layers));
}

} // namespace

TEST_CASE("forward through an identity layer is the input") {
    Mlp model = single_layer(Activation::Identity, Matrix::identity(3), {0, 0, 0});
    Matrix x = Matrix::from_rows({{1, -2, 0.5}, {0, 3, 4}});
    ForwardTrace trace = forward(model, x);
    CHECK(trace.logits() == x);
}

TEST_CASE("forward applies relu") {
    Mlp model = single_layer(Activation::ReLU, Matrix::identity(2), {0, 0});
    ForwardTrace trace = forward(model, Matrix::from_rows({{-1, 2}}));
    CHECK(trace.logits() == Matrix::from_rows({{0, 2}}));
}

TEST_CASE("forward rejects a wrong input width") {
    Mlp model = single_layer(Activation::Identity, Matrix::identity(2), {0, 0});
    CHECK_THROWS_AS(forward(model, Matrix(1, 3)), DimensionMismatch);
}

TEST_CASE("two-layer forward matches a straight-line oracle evaluation") {
    Rng rng(424242);
    Mlp model({{2, 3, Activation::Tanh}, {3, 2, Activation::Identity}}, rng);
    Matrix x = Matrix::from_rows({{0.7, -1.1}});
    ForwardTrace trace = forward(model, x);

    // hand-rolled evaluation, scalar by scalar
    double hidden[3];
    for (int j = 0; j < 3; ++j) {
        double z = model.layer(0).bias[static_cast<std::size_t>(j)];
        z += 0.7 * model.layer(0).weights(0, static_cast<std::size_t>(j));
        z += -1.1 * model.layer(0).weights(1, static_cast<std::size_t>(j));
        hidden[j] = std::tanh(z);
    }
    for (int k = 0; k < 2; ++k) {
        double z = model.layer(1).bias[static_cast<std::size_t>(k)];
        for (int j = 0; j < 3; ++j)
            z += hidden[j] * model.layer(1).weights(static_cast<std::size_t>(j),
                                                    static_cast<std::size_t>(k));
        CHECK(trace.logits()(0, static_cast<std::size_t>(k)) == doctest::Approx(z).epsilon(1e-12));
    }
    CHECK(trace.feature_activations(model).values == trace.post[0]);
}

TEST_CASE("cross entropy closed forms") {
    Matrix uniform(2, 4); // all-equal logits
    auto [loss, grad] = cross_entropy(uniform, {0, 3});
    CHECK(loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(grad.all_finite());

    Matrix saturated = Matrix::from_rows({{1000.0, 0.0}});
    CHECK(cross_entropy(saturated, {0}).first == doctest::Approx(0.0).epsilon(1e-12));

    CHECK_THROWS_AS(cross_entropy(uniform, {0, 4}), LabelOutOfRange);
    CHECK_THROWS_AS(cross_entropy(uniform, {0}), DimensionMismatch);
}

TEST_CASE("cross entropy gradient matches finite differences") {
    Rng rng(9);
    Matrix logits(3, 4);
    for (double& v : logits.data()) v = rng.normal();
    std::vector<int> labels = {2, 0, 3};
    auto [loss, grad] = cross_entropy(logits, labels);
    (void)loss;
    auto f = [&](const Matrix& l) { return cross_entropy(l, labels).first; };
    CHECK(max_rel_error(grad, fd_gradient(f, logits, 1e-6)) <= 1e-6);
}

TEST_CASE("backward locality of the feature hook") {
    Rng rng(77);
    Mlp model({{2, 4, Activation::Tanh}, {4, 3, Activation::Tanh}, {3, 2, Activation::Identity}},
              rng);
    Matrix x = Matrix::from_rows({{0.3, -0.9}, {1.4, 0.2}});
    ForwardTrace trace = forward(model, x);

    // zero loss gradient, nonzero within-layer feedback: only layers at or
    // below the feature layer receive gradient
    Matrix reg_grad(2, 3, 1.0);
    Gradients g = backward(model, trace, Matrix(2, 2), reg_grad);
    CHECK(g.weights[2] == Matrix(3, 2));
    CHECK(g.bias[2] == std::vector<double>{0, 0});
    bool lower_nonzero = false;
    for (double v : g.weights[1].data()) lower_nonzero |= v != 0.0;
    for (double v : g.weights[0].data()) lower_nonzero |= v != 0.0;
    CHECK(lower_nonzero);

    // empty reg gradient behaves as zero
    Matrix dlogits(2, 2, 0.25);
    Gradients plain = backward(model, trace, dlogits, Matrix());
    Gradients zeroed = backward(model, trace, dlogits, Matrix(2, 3));
    for (std::size_t li = 0; li < 3; ++li)
        CHECK(plain.weights[li] == zeroed.weights[li]);
}

TEST_CASE("backward shape errors") {
    Rng rng(78);
    Mlp model({{2, 3, Activation::Tanh}, {3, 2, Activation::Identity}}, rng);
    ForwardTrace trace = forward(model, Matrix(2, 2));
    CHECK_THROWS_AS(backward(model, trace, Matrix(2, 3), Matrix()), DimensionMismatch);
    CHECK_THROWS_AS(backward(model, trace, Matrix(2, 2), Matrix(2, 4)), DimensionMismatch);
}

TEST_CASE("sgd step closed forms") {
    auto make_model = [] {
        return single_layer(Activation::Identity, Matrix::from_rows({{1.0}}), {0.0});
    };
    Gradients g;
    g.weights = {Matrix::from_rows({{2.0}})};
    g.bias = {{0.5}};

    // lr scheduled to exactly zero leaves weights bit-identical
    Mlp frozen = make_model();
    OptimizerState opt0;
    opt0.learning_rate = 0.1;
    opt0.momentum = 0.0;
    opt0.weight_decay = 0.0;
    opt0.schedule = {{0, 0.0}};
    sgd_step(frozen, g, opt0, 0);
    CHECK(frozen.layer(0).weights(0, 0) == 1.0);
    CHECK(frozen.layer(0).bias[0] == 0.0);

    // plain gradient descent
    Mlp plain = make_model();
    OptimizerState opt1;
    opt1.learning_rate = 0.1;
    opt1.momentum = 0.0;
    opt1.weight_decay = 0.0;
    sgd_step(plain, g, opt1, 0);
    CHECK(plain.layer(0).weights(0, 0) == doctest::Approx(1.0 - 0.1 * 2.0).epsilon(1e-12));
    CHECK(plain.layer(0).bias[0] == doctest::Approx(-0.05).epsilon(1e-12));
}

TEST_CASE("two momentum steps on a quadratic match the hand sequence") {
    // f(w) = w^2 / 2, gradient w; lr 0.1, momentum 0.9
    Mlp model = single_layer(Activation::Identity, Matrix::from_rows({{1.0}}), {0.0});
    OptimizerState opt;
    opt.learning_rate = 0.1;
    opt.momentum = 0.9;
    opt.weight_decay = 0.0;

    Gradients g1;
    g1.weights = {Matrix::from_rows({{1.0}})};
    g1.bias = {{0.0}};
    sgd_step(model, g1, opt, 0);
    CHECK(model.layer(0).weights(0, 0) == doctest::Approx(0.9).epsilon(1e-12));

    Gradients g2;
    g2.weights = {Matrix::from_rows({{0.9}})};
    g2.bias = {{0.0}};
    sgd_step(model, g2, opt, 0);
    // v2 = 0.9 * (-0.1) - 0.1 * 0.9 = -0.18; w2 = 0.9 - 0.18 = 0.72
    CHECK(model.layer(0).weights(0, 0) == doctest::Approx(0.72).epsilon(1e-12));
}

TEST_CASE("weight decay applies to weights but not biases") {
    Mlp model = single_layer(Activation::Identity, Matrix::from_rows({{1.0}}), {1.0});
    OptimizerState opt;
    opt.learning_rate = 0.5;
    opt.momentum = 0.0;
    opt.weight_decay = 0.1;
    Gradients g;
    g.weights = {Matrix::from_rows({{0.0}})};
    g.bias = {{0.0}};
    sgd_step(model, g, opt, 0);
    CHECK(model.layer(0).weights(0, 0) == doctest::Approx(1.0 - 0.5 * 0.1).epsilon(1e-12));
    CHECK(model.layer(0).bias[0] == 1.0);
}

TEST_CASE("learning rate schedule compounds from the listed epochs") {
    OptimizerState opt;
    opt.learning_rate = 0.1;
    opt.schedule = {{60, 0.2}, {120, 0.2}, {160, 0.2}};
    CHECK(opt.effective_lr(0) == doctest::Approx(0.1));
    CHECK(opt.effective_lr(59) == doctest::Approx(0.1));
    CHECK(opt.effective_lr(60) == doctest::Approx(0.02));
    CHECK(opt.effective_lr(130) == doctest::Approx(0.004));
    CHECK(opt.effective_lr(200) == doctest::Approx(0.0008));
}

TEST_CASE("end-to-end augmented-loss gradient per variant") {
    // tanh net, away from |.| ties; the det variant is probed through its
    // jitter-smoothed value route (tiny epsilon)
    Rng rng(5150);
    Mlp model({{3, 5, Activation::Tanh}, {5, 4, Activation::Tanh}, {4, 3, Activation::Identity}},
              rng);
    Matrix x(4, 3);
    for (double& v : x.data()) v = rng.normal();
    std::vector<int> labels = {1, 0, 2, 2};

    for (RegVariant variant : {RegVariant::None, RegVariant::Direct, RegVariant::Det,
                               RegVariant::Logdet, RegVariant::Decov}) {
        RegularizerSpec spec;
        spec.variant = variant;
        spec.lambda1 = variant == RegVariant::None ? 0.0 : 0.25;
        spec.lambda2 = variant == RegVariant::None ? 0.0 : 0.03;
        spec.gamma = 1.4;
        spec.epsilon = variant == RegVariant::Det ? 1e-8 : 1e-6;

        auto loss_at = [&](const Mlp& m) {
            ForwardTrace t = forward(m, x);
            double loss = cross_entropy(t.logits(), labels).first;
            if (variant == RegVariant::None) return loss;
            ActivationBatch acts = t.feature_activations(m);
            if (variant == RegVariant::Decov) return loss + spec.lambda1 * decov_loss(acts).first;
            SimilarityMatrix sim = pairwise_similarity(acts, spec.gamma);
            double j = 0.0;
            if (variant == RegVariant::Direct) j = j_direct(sim).value;
            if (variant == RegVariant::Det) j = -det_psd(sim.s, spec.epsilon);
            if (variant == RegVariant::Logdet) j = -logdet_psd(sim.s, spec.epsilon);
            return loss + spec.lambda1 * j + spec.lambda2 * activation_penalty(acts).first;
        };

        ForwardTrace trace = forward(model, x);
        auto [ce, dlogits] = cross_entropy(trace.logits(), labels);
        (void)ce;
        Matrix reg_grad;
        if (variant != RegVariant::None)
            reg_grad = regularizer_loss(trace.feature_activations(model), spec).grad_acts;
        Gradients analytic = backward(model, trace, dlogits, reg_grad);

        for (std::size_t li = 0; li < model.num_layers(); ++li) {
            auto f = [&](const Matrix& w) {
                Mlp probe = model;
                probe.layer(li).weights = w;
                return loss_at(probe);
            };
            Matrix fd = fd_gradient(f, model.layer(li).weights, 1e-6);
            CHECK(max_rel_error(analytic.weights[li], fd) <= 1e-5);
        }
    }
}

TEST_CASE("train_epoch: zero-regularizer variants share the trajectory") {
    Dataset ds = gen_blobs(30, 2, 2, 0.8, 99);

    auto run = [&](RegularizerSpec reg) {
        Rng rng(mix_seed(5, 0x1217));
        Mlp model({{2, 8, Activation::ReLU}, {8, 4, Activation::ReLU}, {4, 2, Activation::Identity}},
                  rng);
        OptimizerState opt;
        opt.learning_rate = 0.05;
        std::vector<double> stream;
        for (std::size_t epoch = 0; epoch < 3; ++epoch) {
            EpochMetrics m = train_epoch(model, ds, reg, opt, 5, epoch, {16, false});
            stream.push_back(m.mean_aug);
            stream.push_back(m.train_error_pct);
        }
        for (std::size_t li = 0; li < model.num_layers(); ++li)
            for (double w : model.layer(li).weights.data()) stream.push_back(w);
        return stream;
    };

    RegularizerSpec none;
    none.variant = RegVariant::None;
    RegularizerSpec zeroed;
    zeroed.variant = RegVariant::Direct;
    zeroed.lambda1 = 0.0;
    zeroed.lambda2 = 0.0;
    zeroed.gamma = 10.0;
    CHECK(run(none) == run(zeroed)); // bit-identical
}

TEST_CASE("train_epoch is deterministic given the seed") {
    Dataset ds = gen_two_moons(120, 0.15, 42);
    RegularizerSpec reg;
    reg.variant = RegVariant::Direct;
    reg.lambda1 = 0.001;
    reg.lambda2 = 0.001;
    reg.gamma = 10.0;

    auto run = [&] {
        Rng rng(mix_seed(3, 0x1217));
        Mlp model({{2, 8, Activation::ReLU}, {8, 8, Activation::ReLU}, {8, 2, Activation::Identity}},
                  rng);
        OptimizerState opt;
        std::vector<double> stream;
        for (std::size_t epoch = 0; epoch < 4; ++epoch) {
            EpochMetrics m = train_epoch(model, ds, reg, opt, 3, epoch, {16, false});
            stream.push_back(m.mean_ce);
            stream.push_back(m.mean_reg);
            stream.push_back(m.mean_aug);
            stream.push_back(m.train_error_pct);
        }
        return stream;
    };
    CHECK(run() == run());
}

TEST_CASE("per-batch loss decomposition holds to 1e-12") {
    Dataset ds = gen_two_moons(100, 0.2, 17);
    RegularizerSpec reg;
    reg.variant = RegVariant::Logdet;
    reg.lambda1 = 0.01;
    reg.lambda2 = 0.002;
    reg.gamma = 2.0;

    Rng rng(mix_seed(8, 0x1217));
    Mlp model({{2, 6, Activation::Tanh}, {6, 6, Activation::Tanh}, {6, 2, Activation::Identity}},
              rng);
    OptimizerState opt;
    EpochMetrics m = train_epoch(model, ds, reg, opt, 8, 0, {32, false});
    for (const BatchRecord& r : m.batches)
        CHECK(std::fabs(r.total - (r.ce + r.reg)) <= 1e-12);
}

TEST_CASE("separable blobs train to zero error") {
    Dataset ds = gen_blobs(40, 2, 2, 0.15, 3); // tight clusters, far apart
    RegularizerSpec none;
    none.variant = RegVariant::None;
    Rng rng(mix_seed(1, 0x1217));
    Mlp model({{2, 8, Activation::ReLU}, {8, 2, Activation::Identity}}, rng);
    OptimizerState opt;
    opt.learning_rate = 0.05;
    double final_err = 100.0;
    for (std::size_t epoch = 0; epoch < 50; ++epoch)
        final_err = train_epoch(model, ds, none, opt, 1, epoch, {16, false}).train_error_pct;
    CHECK(final_err == 0.0);
    CHECK(evaluate_error_pct(model, ds) == 0.0);
}

TEST_CASE("diversity pressure lowers the direct similarity of the feature layer") {
    Dataset ds = gen_two_moons(240, 0.2, 31);

    auto mean_j50 = [&](RegVariant variant, double lambda1) {
        RegularizerSpec reg;
        reg.variant = variant;
        reg.lambda1 = lambda1;
        reg.lambda2 = variant == RegVariant::None ? 0.0 : 0.001;
        reg.gamma = 10.0;
        Rng rng(mix_seed(12, 0x1217));
        Mlp model({{2, 16, Activation::ReLU}, {16, 16, Activation::ReLU},
                   {16, 2, Activation::Identity}},
                  rng);
        OptimizerState opt;
        TrainOptions topt;
        topt.batch_size = 32;
        topt.track_direct_diversity = true;
        EpochMetrics last;
        for (std::size_t epoch = 0; epoch < 50; ++epoch)
            last = train_epoch(model, ds, reg, opt, 12, epoch, topt);
        REQUIRE(last.mean_j_direct.has_value());
        return *last.mean_j_direct;
    };

    double with_diversity = mean_j50(RegVariant::Direct, 0.01);
    double without = mean_j50(RegVariant::None, 0.0);
    CHECK(with_diversity < without);
}

TEST_CASE("regularizer on a model without hidden layers is rejected") {
    Dataset ds = gen_blobs(10, 2, 2, 0.5, 4);
    Mlp model = single_layer(Activation::Identity, Matrix::identity(2), {0, 0});
    RegularizerSpec reg;
    reg.variant = RegVariant::Direct;
    OptimizerState opt;
    CHECK_THROWS_AS(train_epoch(model, ds, reg, opt, 1, 0, {8, false}), InvalidArgument);
}
