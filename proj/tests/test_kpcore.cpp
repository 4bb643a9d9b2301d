#include <doctest.h>

#include <cmath>
#include <numeric>

#include "kprnn/kpcore.hpp"
#include "kprnn/rng.hpp"
#include "oracles.hpp"

using namespace kprnn;

TEST_CASE("prime_factorize known values") {
    CHECK(prime_factorize(164) == std::vector<std::size_t>{2, 2, 41});
    CHECK(prime_factorize(1) == std::vector<std::size_t>{1});
    CHECK(prime_factorize(154) == std::vector<std::size_t>{2, 7, 11});
    CHECK(prime_factorize(97) == std::vector<std::size_t>{97});
    CHECK_THROWS_AS(prime_factorize(0), std::invalid_argument);
}

TEST_CASE("prime_factorize product and ordering over random inputs") {
    Rng rng(11);
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 1 + rng.index(5000);
        auto f = prime_factorize(n);
        CHECK(std::is_sorted(f.begin(), f.end()));
        std::size_t prod = 1;
        for (auto p : f) prod *= p;
        CHECK(prod == n);
    }
}

TEST_CASE("reduce_list known merges") {
    CHECK(reduce_list({2, 7, 11}) == std::vector<std::size_t>{11, 14});
    CHECK(reduce_list({2, 2, 41}) == std::vector<std::size_t>{4, 41});
    CHECK(reduce_list({2, 2, 2, 2, 2, 2, 2, 2}) == std::vector<std::size_t>{16, 16});
    CHECK(reduce_list({7}) == std::vector<std::size_t>{1, 7});
}

TEST_CASE("reduce_list preserves products") {
    Rng rng(5);
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 2 + rng.index(4000);
        auto f = prime_factorize(n);
        auto r = reduce_list(f);
        CHECK(r.size() == 2);
        CHECK(r[0] * r[1] == n);
        CHECK(r[0] <= r[1]);
    }
}

TEST_CASE("select_factor_shapes trace examples") {
    const ShapePlan p1 = select_factor_shapes(154, 164);
    CHECK(p1.first == FactorShape{14, 4});
    CHECK(p1.second == FactorShape{11, 41});
    CHECK(p1.params_compressed == 507);
    CHECK(p1.params_dense == 25256);

    const ShapePlan p2 = select_factor_shapes(4, 4);
    CHECK(p2.first == FactorShape{2, 2});
    CHECK(p2.second == FactorShape{2, 2});

    const ShapePlan p3 = select_factor_shapes(7, 6);
    CHECK(p3.first == FactorShape{7, 2});
    CHECK(p3.second == FactorShape{1, 3});
}

TEST_CASE("select_factor_shapes soundness over random dims") {
    Rng rng(17);
    for (int t = 0; t < 300; ++t) {
        const std::size_t m = 1 + rng.index(600);
        const std::size_t n = 1 + rng.index(600);
        const ShapePlan p = select_factor_shapes(m, n);
        CHECK(p.first.rows * p.second.rows == m);
        CHECK(p.first.cols * p.second.cols == n);
        CHECK(p.params_compressed ==
              p.first.rows * p.first.cols + p.second.rows * p.second.cols);
    }
}

TEST_CASE("kron_expand small cases") {
    const DenseMatrix ones = DenseMatrix::from_rows({{1, 1}, {1, 1}});
    const DenseMatrix five = DenseMatrix::from_rows({{5}});
    const DenseMatrix e1 = kron_expand({ones, five});
    CHECK(e1.rows == 2);
    CHECK(e1.cols == 2);
    for (double v : e1.data) CHECK(v == 5.0);

    const DenseMatrix b = DenseMatrix::from_rows({{1, 2}, {3, 4}});
    const DenseMatrix two = DenseMatrix::from_rows({{2}});
    const DenseMatrix e2 = kron_expand({b, two});
    CHECK(e2.data == std::vector<double>{2, 4, 6, 8});
}

TEST_CASE("kron_expand matches index-formula oracle at the 154x164 shape") {
    Rng rng(42);
    const DenseMatrix b = oracles::random_matrix(rng, 11, 41);
    const DenseMatrix c = oracles::random_matrix(rng, 14, 4);
    const DenseMatrix got = kron_expand({b, c});
    CHECK(got.rows == 154);
    CHECK(got.cols == 164);
    CHECK(max_abs_diff(got, oracles::kron_expand_index_formula(b, c)) == 0.0);
}

TEST_CASE("kron_expand element cap") {
    const DenseMatrix big(1 << 13, 2, 1.0);
    const DenseMatrix other(1 << 13, 2, 1.0);
    CHECK_THROWS_AS(kron_expand({big, other}), std::length_error);
    CHECK_NOTHROW(kron_expand({big, other}, std::size_t{1} << 30));
}

TEST_CASE("multi_kron_expand scalars, identities and fold order") {
    const MultiKronChain scalars{{DenseMatrix::from_rows({{2}}), DenseMatrix::from_rows({{3}}),
                                  DenseMatrix::from_rows({{5}})}};
    const DenseMatrix s = multi_kron_expand(scalars);
    CHECK(s.rows == 1);
    CHECK(s.data[0] == 30.0);

    MultiKronChain ids;
    for (int i = 0; i < 8; ++i) ids.factors.push_back(DenseMatrix::identity(2));
    const DenseMatrix e = multi_kron_expand(ids);
    CHECK(max_abs_diff(e, DenseMatrix::identity(256)) == 0.0);

    Rng rng(7);
    const DenseMatrix f0 = oracles::random_matrix(rng, 3, 2);
    const DenseMatrix f1 = oracles::random_matrix(rng, 2, 4);
    const DenseMatrix f2 = oracles::random_matrix(rng, 2, 3);
    const DenseMatrix left = multi_kron_expand({{f0, f1, f2}});
    const DenseMatrix right = kron_expand({f0, kron_expand({f1, f2})});
    CHECK(max_abs_diff(left, right) < 1e-12);
}

TEST_CASE("kp_matvec identity and tiny examples") {
    const KronFactorPair idpair{DenseMatrix::identity(2), DenseMatrix::identity(2)};
    CHECK(kp_matvec(idpair, {1, 2, 3, 4}) == std::vector<double>{1, 2, 3, 4});

    const KronFactorPair p{DenseMatrix::from_rows({{1, 2}, {3, 4}}),
                           DenseMatrix::from_rows({{2}})};
    CHECK(kp_matvec(p, {1, 1}) == std::vector<double>{6, 14});

    CHECK_THROWS_AS(kp_matvec(p, {1, 2, 3}), std::invalid_argument);
}

TEST_CASE("kp_matvec matches expansion oracle at the KWS per-gate shape") {
    Rng rng(3);
    const KronFactorPair p{oracles::random_matrix(rng, 59, 8), oracles::random_matrix(rng, 2, 16)};
    const auto x = oracles::random_vector(rng, 128);
    CHECK(rel_error(kp_matvec(p, x), oracles::kp_matvec_via_expansion(p, x)) < 1e-10);
}

TEST_CASE("kp_matvec oracle equivalence over random shapes") {
    Rng rng(2024);
    for (int t = 0; t < 200; ++t) {
        const std::size_t m1 = 1 + rng.index(16), n1 = 1 + rng.index(16);
        const std::size_t m2 = 1 + rng.index(16), n2 = 1 + rng.index(16);
        const KronFactorPair p{oracles::random_matrix(rng, m1, n1),
                               oracles::random_matrix(rng, m2, n2)};
        const auto x = oracles::random_vector(rng, n1 * n2);
        CHECK(rel_error(kp_matvec(p, x), oracles::kp_matvec_via_expansion(p, x)) < 1e-10);
    }
}

TEST_CASE("kp_matvec_grad linearity in the upstream gradient") {
    Rng rng(9);
    const KronFactorPair p{oracles::random_matrix(rng, 3, 2), oracles::random_matrix(rng, 2, 2)};
    const auto x = oracles::random_vector(rng, 4);

    const std::vector<double> zero(6, 0.0);
    const KpMatvecGrad gz = kp_matvec_grad(p, x, zero);
    for (double v : gz.db.data) CHECK(v == 0.0);
    for (double v : gz.dc.data) CHECK(v == 0.0);
    for (double v : gz.dx) CHECK(v == 0.0);

    const auto g = oracles::random_vector(rng, 6);
    std::vector<double> g2(g);
    for (double& v : g2) v *= 2.0;
    const KpMatvecGrad ga = kp_matvec_grad(p, x, g);
    const KpMatvecGrad gb = kp_matvec_grad(p, x, g2);
    for (std::size_t i = 0; i < ga.db.data.size(); ++i)
        CHECK(gb.db.data[i] == doctest::Approx(2.0 * ga.db.data[i]).epsilon(1e-12));
    for (std::size_t i = 0; i < ga.dx.size(); ++i)
        CHECK(gb.dx[i] == doctest::Approx(2.0 * ga.dx[i]).epsilon(1e-12));
}

TEST_CASE("kp_matvec_grad matches central finite differences") {
    Rng rng(31);
    const double step = 1e-6, tol = 1e-5;
    for (int t = 0; t < 25; ++t) {
        KronFactorPair p{oracles::random_matrix(rng, 3, 2), oracles::random_matrix(rng, 2, 2)};
        std::vector<double> x = oracles::random_vector(rng, 4);
        const std::vector<double> g = oracles::random_vector(rng, 6);
        const auto dot_with_g = [&]() {
            const auto y = kp_matvec(p, x);
            return std::inner_product(y.begin(), y.end(), g.begin(), 0.0);
        };
        const KpMatvecGrad grad = kp_matvec_grad(p, x, g);
        for (std::size_t i = 0; i < p.b.data.size(); ++i)
            CHECK(oracles::grad_close(grad.db.data[i],
                                      oracles::central_diff(dot_with_g, p.b.data[i], step), tol));
        for (std::size_t i = 0; i < p.c.data.size(); ++i)
            CHECK(oracles::grad_close(grad.dc.data[i],
                                      oracles::central_diff(dot_with_g, p.c.data[i], step), tol));
        for (std::size_t i = 0; i < x.size(); ++i)
            CHECK(oracles::grad_close(grad.dx[i],
                                      oracles::central_diff(dot_with_g, x[i], step), tol));
    }
}

TEST_CASE("hkp_matvec degenerate and random cases") {
    Rng rng(21);
    const KronFactorPair lower{oracles::random_matrix(rng, 2, 2),
                               oracles::random_matrix(rng, 2, 3)};
    const auto x6 = oracles::random_vector(rng, 6);

    SUBCASE("r = 0 equals the pure Kronecker product") {
        const HybridMatrix h{DenseMatrix(0, 6), lower, 0};
        CHECK(hkp_matvec(h, x6) == kp_matvec(lower, x6));
    }
    SUBCASE("r = m equals the pure dense product") {
        const DenseMatrix upper = oracles::random_matrix(rng, 5, 6);
        const HybridMatrix h{upper, KronFactorPair{}, 5};
        CHECK(hkp_matvec(h, x6) == matvec(upper, x6));
    }
    SUBCASE("r = 3, m = 7 against the stacked-dense oracle") {
        const HybridMatrix h{oracles::random_matrix(rng, 3, 6), lower, 3};
        CHECK(rel_error(hkp_matvec(h, x6), oracles::hkp_matvec_via_stacking(h, x6)) < 1e-10);
    }
    SUBCASE("stacking property over random instances") {
        for (int t = 0; t < 100; ++t) {
            const std::size_t m1 = 1 + rng.index(5), n1 = 1 + rng.index(5);
            const std::size_t m2 = 1 + rng.index(5), n2 = 1 + rng.index(5);
            const std::size_t r = rng.index(6);
            const std::size_t n = n1 * n2;
            const HybridMatrix h{oracles::random_matrix(rng, r, n),
                                 KronFactorPair{oracles::random_matrix(rng, m1, n1),
                                                oracles::random_matrix(rng, m2, n2)},
                                 r};
            const auto x = oracles::random_vector(rng, n);
            CHECK(rel_error(hkp_matvec(h, x), oracles::hkp_matvec_via_stacking(h, x)) < 1e-10);
        }
    }
}

TEST_CASE("compression_ratio paper shapes") {
    CHECK(compression_ratio(154, 164, select_factor_shapes(154, 164)) ==
          doctest::Approx(25256.0 / 507.0));

    ShapePlan p2x2;
    p2x2.first = {2, 2};
    p2x2.second = {128, 128};
    CHECK(compression_ratio(256, 256, p2x2) == doctest::Approx(65536.0 / 16388.0));
    CHECK(compression_ratio(256, 256, p2x2) == doctest::Approx(4.0).epsilon(1e-3));

    ShapePlan p32x8;
    p32x8.first = {32, 8};
    p32x8.second = {8, 32};
    CHECK(compression_ratio(256, 256, p32x8) == 128.0);
}

TEST_CASE("enumerate_kp_ratios structure") {
    SUBCASE("256x256 has exactly eight non-trivial ratio levels, max 128") {
        const auto entries = enumerate_kp_ratios(256, 256);
        std::vector<std::size_t> params_seen;
        for (const auto& e : entries)
            if (e.ratio > 1.0) params_seen.push_back(e.params);
        std::sort(params_seen.begin(), params_seen.end());
        params_seen.erase(std::unique(params_seen.begin(), params_seen.end()), params_seen.end());
        CHECK(params_seen.size() == 8);
        CHECK(entries.front().ratio == 128.0);
        const bool has_2x2_split =
            std::any_of(entries.begin(), entries.end(), [](const KpRatioEntry& e) {
                return e.first == FactorShape{2, 2} && e.second == FactorShape{128, 128};
            });
        CHECK(has_2x2_split);
        CHECK(std::is_sorted(entries.begin(), entries.end(),
                             [](const auto& a, const auto& b) { return a.ratio > b.ratio; }));
    }
    SUBCASE("4x4 includes the (2,2)x(2,2) split at ratio 2") {
        const auto entries = enumerate_kp_ratios(4, 4);
        const bool found = std::any_of(entries.begin(), entries.end(), [](const KpRatioEntry& e) {
            return e.first == FactorShape{2, 2} && e.second == FactorShape{2, 2} && e.ratio == 2.0;
        });
        CHECK(found);
    }
    SUBCASE("prime dims only admit splits containing a unit factor") {
        for (const auto& e : enumerate_kp_ratios(7, 7)) {
            const bool has_unit = e.first.rows == 1 || e.first.cols == 1 || e.second.rows == 1 ||
                                  e.second.cols == 1;
            CHECK(has_unit);
        }
    }
}

// The crosswise reduced-list plan maximizes compression among reduced splits,
// but the full divisor enumeration can beat it: 154x164 admits the rank-one
// split 154x1 (x) 1x164 with 318 parameters and 22x4 (x) 7x41 with 375,
// against the plan's 507; 472x128 admits 59x4 (x) 8x32 with 492 against 600.
// These values are frozen here so any change in either route is caught.
TEST_CASE("plan ratio versus exhaustive enumeration maxima") {
    const ShapePlan plan154 = select_factor_shapes(154, 164);
    CHECK(plan154.params_compressed == 507);
    const auto e154 = enumerate_kp_ratios(154, 164);
    CHECK(e154.front().params == 318);
    CHECK(e154.front().ratio == doctest::Approx(25256.0 / 318.0));
    const bool has_uneven_split =
        std::any_of(e154.begin(), e154.end(), [](const KpRatioEntry& e) {
            return e.params == 375 &&
                   ((e.first == FactorShape{22, 4} && e.second == FactorShape{7, 41}) ||
                    (e.first == FactorShape{7, 41} && e.second == FactorShape{22, 4}));
        });
    CHECK(has_uneven_split);

    const ShapePlan plan472 = select_factor_shapes(472, 128);
    CHECK(plan472.params_compressed == 600);
    CHECK(plan472.first == FactorShape{59, 8});
    CHECK(plan472.second == FactorShape{8, 16});
    const auto e472 = enumerate_kp_ratios(472, 128);
    CHECK(e472.front().params == 492);
}

TEST_CASE("hkp_rank_rows_for_target") {
    SUBCASE("target 1.0 admits the fully dense representation") {
        const HkpPlan p = hkp_rank_rows_for_target(8, 6, 1.0);
        CHECK(p.r == 8);
        CHECK(p.achieved_ratio >= 1.0);
    }
    SUBCASE("target equal to the max Kronecker ratio needs no dense rows") {
        const double max_ratio = select_factor_shapes(256, 256).ratio();
        CHECK(max_ratio == 128.0);
        const HkpPlan p = hkp_rank_rows_for_target(256, 256, max_ratio);
        CHECK(p.r == 0);
    }
    SUBCASE("472x128 at 10x, verified by a direct parameter scan") {
        const HkpPlan p = hkp_rank_rows_for_target(472, 128, 10.0);
        const double dense = 472.0 * 128.0;
        CHECK(p.achieved_ratio >= 10.0);
        // Every larger r must miss the target.
        for (std::size_t r = p.r + 1; r <= 472; ++r) {
            const std::size_t params =
                r == 472 ? 472 * 128 : r * 128 + select_factor_shapes(472 - r, 128).params_compressed;
            CHECK(dense / static_cast<double>(params) < 10.0);
        }
        CHECK(p.r == 43);
        CHECK(p.params == 43 * 128 + select_factor_shapes(429, 128).params_compressed);
    }
    SUBCASE("infeasible target names the maximum achievable ratio") {
        CHECK_THROWS_WITH_AS(hkp_rank_rows_for_target(7, 7, 50.0),
                             doctest::Contains("3.5"), std::invalid_argument);
    }
}

TEST_CASE("flop model") {
    CHECK(flops_dense(472, 128) == 60416);
    CHECK(flops_kp(59, 8, 2, 16) == 1200);
    CHECK(flops_kp(select_factor_shapes(118, 128)) == 1200);

    // 5% density on 472x128: nnz = 60416 - floor(0.95 * 60416) = 3021
    const std::size_t nnz = 60416 - static_cast<std::size_t>(0.95 * 60416);
    CHECK(nnz == 3021);
    CHECK(flops_csr(nnz) == 3021);

    CHECK(flops_lmf(472, 128, 4) == 4 * 128 + 472 * 4);
    const ShapePlan lower = select_factor_shapes(429, 128);
    CHECK(flops_hkp(43, 128, lower) == 43 * 128 + flops_kp(lower));
}

TEST_CASE("flop dominance at every benchmark per-gate shape") {
    const std::pair<std::size_t, std::size_t> gate_shapes[] = {
        {40, 68}, {118, 128}, {154, 164}, {178, 255}, {32, 48}};
    for (const auto& [m, n] : gate_shapes) {
        const ShapePlan plan = select_factor_shapes(m, n);
        CHECK(flops_kp(plan) < flops_dense(m, n));
    }
}
