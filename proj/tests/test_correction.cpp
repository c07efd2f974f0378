#include <doctest.h>

#include <cmath>

#include "noisebench/correction.hpp"
#include "noisebench/errors.hpp"
#include "oracles.hpp"

using namespace noisebench;
using namespace nbtest;

namespace {

void check_rows(const TransitionMatrix& t) {
    for (std::size_t i = 0; i < t.classes(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < t.classes(); ++j) s += t(i, j);
        CHECK(std::abs(s - 1.0) < 1e-9);
    }
}

}  // namespace

TEST_CASE("anchor estimate on the oracle posterior") {
    const auto t = sym(0.4, 4);
    const LabeledSet s = make_synthetic_blobs(4, 1000, 20, 6.0, 1);
    const auto est = estimate_transition_anchor(noisy_posterior(s.features, 6.0, t));
    CHECK(est.method == EstimationMethod::Anchor);
    CHECK(max_abs_diff(est.matrix, t) < 0.05);
    check_rows(est.matrix);
    CHECK(est.anchors.size() == 4);

    const auto clean = estimate_transition_anchor(noisy_posterior(s.features, 6.0, TransitionMatrix::identity(4)));
    CHECK(max_abs_diff(clean.matrix, TransitionMatrix::identity(4)) < 0.05);
}

TEST_CASE("literal argmax anchor is captured by an outlier") {
    const auto t = sym(0.4, 4);
    const LabeledSet s = make_synthetic_blobs(4, 250, 20, 6.0, 2);
    DenseMatrix probs = noisy_posterior(s.features, 6.0, t);
    // A sample more confident in class 0 than any clean sample can be (max 0.6).
    probs(17, 0) = 0.7;
    probs(17, 1) = 0.3;
    probs(17, 2) = probs(17, 3) = 0.0;
    const auto literal = estimate_transition_anchor(probs, 100.0);
    CHECK(literal.anchors[0] == 17);
    CHECK(literal.matrix(0, 0) == doctest::Approx(0.7));
    CHECK(literal.matrix(0, 1) == doctest::Approx(0.3));
    const auto robust = estimate_transition_anchor(probs);
    CHECK(robust.anchors[0] != 17);
    CHECK(max_abs_diff(robust.matrix, t) < 0.05);
}

TEST_CASE("anchor estimate errors") {
    DenseMatrix probs(5, 3, 0.0);
    for (std::size_t i = 0; i < 5; ++i) probs(i, i % 2) = 1.0;  // class 2 never predicted
    try {
        estimate_transition_anchor(probs);
        FAIL("degenerate row not detected");
    } catch (const EstimationError& e) {
        CHECK(e.classes() == std::vector<std::size_t>{2});
    }
    CHECK_THROWS_AS(estimate_transition_anchor(DenseMatrix(2, 3, 1.0 / 3)), ContractError);
    CHECK_THROWS_AS(estimate_transition_anchor(DenseMatrix(5, 3, 1.0 / 3), 101.0), ConfigError);
}

TEST_CASE("gold estimate") {
    const auto t = sym(0.4, 4);
    SUBCASE("large validation set") {
        const LabeledSet v = make_synthetic_blobs(4, 250, 20, 6.0, 3);
        const auto est = estimate_transition_gold(noisy_posterior(v.features, 6.0, t), v.labels);
        CHECK(est.method == EstimationMethod::Gold);
        CHECK(max_abs_diff(est.matrix, t) < 0.03);
        CHECK(est.diagnostics == std::vector<double>(4, 250.0));
        check_rows(est.matrix);
    }
    SUBCASE("one sample per class reproduces its prediction") {
        const DenseMatrix probs(3, 3, {0.2, 0.3, 0.5, 0.6, 0.3, 0.1, 0.25, 0.25, 0.5});
        const std::vector<ClassId> y{2, 0, 1};
        const auto est = estimate_transition_gold(probs, y);
        for (std::size_t k = 0; k < 3; ++k)
            for (std::size_t j = 0; j < 3; ++j) CHECK(est.matrix(y[k], j) == doctest::Approx(probs(k, j)).epsilon(1e-15));
    }
    SUBCASE("2% of 1000 samples cannot cover 100 classes") {
        const std::size_t m = 20;
        DenseMatrix probs(m, 100, 0.01);
        std::vector<ClassId> y(m);
        for (std::size_t i = 0; i < m; ++i) y[i] = static_cast<ClassId>(5 * i);
        try {
            estimate_transition_gold(probs, y);
            FAIL("missing classes not detected");
        } catch (const EstimationError& e) {
            CHECK(e.classes().size() == 80);
            CHECK(e.classes().front() == 1);
            CHECK(std::string(e.what()).find("missing") != std::string::npos);
        }
        const auto fb = estimate_transition_gold_or_identity(probs, y);
        CHECK(fb.fallback_rows.size() == 80);
        CHECK(fb.matrix(1, 1) == 1.0);
        CHECK(fb.matrix(0, 0) == doctest::Approx(0.01));
    }
    SUBCASE("error shrinks with validation size") {
        std::vector<double> mean_err;
        for (std::size_t m : {50u, 200u, 1000u}) {
            double total = 0.0;
            for (std::uint64_t seed = 0; seed < 10; ++seed) {
                // Moderate separation so that posteriors vary within a class.
                const LabeledSet v = make_synthetic_blobs(4, m / 4 + (m % 4 != 0), 20, 3.0, 100 + seed);
                total += max_abs_diff(estimate_transition_gold(noisy_posterior(v.features, 3.0, t), v.labels).matrix, t);
            }
            mean_err.push_back(total / 10);
        }
        MESSAGE("gold error by m: " << mean_err[0] << " " << mean_err[1] << " " << mean_err[2]);
        CHECK(mean_err[0] > mean_err[1]);
        CHECK(mean_err[1] > mean_err[2]);
    }
}

TEST_CASE("forward-corrected loss") {
    Rng rng(5);
    SUBCASE("identity transition equals cce") {
        for (int k = 0; k < 20; ++k) {
            const DenseMatrix z = random_matrix(rng, 7, 5, 3.0);
            std::vector<ClassId> y(7);
            for (auto& v : y) v = static_cast<ClassId>(rng.below(5));
            const auto a = forward_corrected_loss(z, y, TransitionMatrix::identity(5));
            const auto b = cce(z, y);
            CHECK(std::abs(a.value - b.value) < 1e-12);
            for (std::size_t i = 0; i < a.dlogits.size(); ++i)
                CHECK(std::abs(a.dlogits.values()[i] - b.dlogits.values()[i]) < 1e-12);
        }
    }
    SUBCASE("gradient matches finite differences") { CHECK(forward_corrected_fd_worst(120, 6) < 1e-4); }
    SUBCASE("zero corrected probability is clamped and counted") {
        // T sends everything to class 0, so (T^T p)_1 = 0.
        DenseMatrix tm(2, 2, 0.0);
        tm(0, 0) = tm(1, 0) = 1.0;
        const DenseMatrix z(3, 2, {1.0, 0.0, 0.0, 1.0, 2.0, 2.0});
        const std::vector<ClassId> y{1, 1, 0};
        const auto out = forward_corrected_loss(z, y, TransitionMatrix(tm));
        CHECK(out.clamp_incidents == 2);
        CHECK(std::isfinite(out.value));
        CHECK(out.value == doctest::Approx(2 * -std::log(kCorrectedProbFloor) / 3));
        CHECK(out.dlogits.all_finite());
    }
}
