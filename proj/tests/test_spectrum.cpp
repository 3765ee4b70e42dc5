#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "generators.hpp"
#include "kdvred/spectrum.hpp"
#include "oracles.hpp"

using namespace kdvred;
using namespace kdvred::spectrum;

namespace {

using kdvred::test::Instance;

Instance reference_pair() {
    return {CouplingModel::structured({1.0, 1.0}, 0.5), BackgroundState{{1.0, 0.1}}};
}

} // namespace

TEST(BlockMatrix, SingleComponent) {
    const auto a = assemble_block_matrix(CouplingModel::structured({2.0}, 0.0), BackgroundState{{3.0}});
    Eigen::Matrix2d expected;
    expected << 0, 3, 2, 0;
    EXPECT_EQ(a, Eigen::MatrixXd(expected));
}

TEST(BlockMatrix, TwoComponentLayout) {
    const auto inst = reference_pair();
    const auto a = assemble_block_matrix(inst.coupling, inst.bg);
    ASSERT_EQ(a.rows(), 4);
    EXPECT_EQ(a(2, 0), 1.0);  // g1
    EXPECT_EQ(a(0, 2), 1.0);  // rho01
    EXPECT_EQ(a(2, 1), 0.5);  // h
    EXPECT_EQ(a(1, 3), 0.1);  // rho02
    EXPECT_EQ(a(3, 1), 1.0);  // g2
}

TEST(BlockMatrix, DiagonalBlocksAreZero) {
    std::mt19937_64 rng(3);
    for (std::size_t n = 1; n <= 6; ++n) {
        const auto inst = kdvred::test::random_structured(rng, n);
        const auto a = assemble_block_matrix(inst.coupling, inst.bg);
        const auto ni = static_cast<Eigen::Index>(n);
        EXPECT_EQ(a.topLeftCorner(ni, ni).cwiseAbs().sum(), 0.0);
        EXPECT_EQ(a.bottomRightCorner(ni, ni).cwiseAbs().sum(), 0.0);
    }
}

TEST(BlockMatrix, DimensionMismatchRejected) {
    EXPECT_THROW(assemble_block_matrix(CouplingModel::structured({1.0, 1.0}, 0.5), BackgroundState{{1.0}}),
                 ConfigError);
}

TEST(Positivity, ReferencePairPasses) {
    const auto r = positivity_report(reference_pair().coupling);
    EXPECT_TRUE(r.is_positive_definite);
    EXPECT_TRUE(*r.necessary_pass);
    EXPECT_TRUE(*r.sufficient_pass);
}

TEST(Positivity, NecessaryConditionViolated) {
    const auto r = positivity_report(CouplingModel::structured({1.0, 4.0}, 2.5));
    EXPECT_FALSE(r.is_positive_definite);
    EXPECT_FALSE(*r.necessary_pass);
    EXPECT_FALSE(*r.sufficient_pass);
}

TEST(Positivity, NecessaryButNotSufficient) {
    // det = 9 - 4 > 0 with positive diagonal.
    const auto r = positivity_report(CouplingModel::structured({1.0, 9.0}, 2.0));
    EXPECT_TRUE(r.is_positive_definite);
    EXPECT_TRUE(*r.necessary_pass);
    EXPECT_FALSE(*r.sufficient_pass);
}

TEST(Positivity, UsesTwoSmallestCouplings) {
    // Two smallest are 1 and 2, so h must be below sqrt(2).
    const auto r = positivity_report(CouplingModel::structured({5.0, 1.0, 2.0}, 1.5));
    EXPECT_FALSE(*r.necessary_pass);
    EXPECT_FALSE(r.is_positive_definite);
}

TEST(Positivity, GeneralFormHasNoStructuredFlags) {
    Eigen::Matrix2d a;
    a << 2.0, 0.3, 0.3, 1.0;
    const auto r = positivity_report(CouplingModel::general(a));
    EXPECT_TRUE(r.is_positive_definite);
    EXPECT_FALSE(r.necessary_pass.has_value());
}

TEST(Positivity, MinorTestMatchesEigenvalues) {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> gd(0.2, 3.0), ud(0.0, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + static_cast<std::size_t>(trial % 5);
        std::vector<double> g(n);
        for (auto& x : g) x = gd(rng);
        const double h = 3.0 * ud(rng);
        const auto c = CouplingModel::structured(g, h);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c.alpha());
        const bool pd = es.eigenvalues().minCoeff() > 0.0;
        const auto r = positivity_report(c);
        if (std::abs(es.eigenvalues().minCoeff()) > 1e-10) { EXPECT_EQ(r.is_positive_definite, pd); }
        if (r.is_positive_definite) { EXPECT_TRUE(*r.necessary_pass); }
        if (*r.sufficient_pass) { EXPECT_TRUE(r.is_positive_definite); }
    }
}

TEST(CharPoly, VanishesAtReferenceEigenvalue) {
    const auto inst = reference_pair();
    const double mu = 0.5 * (1.1 + std::sqrt(1.1 * 1.1 - 4.0 * 0.1 * (1.0 - 0.25)));
    EXPECT_LT(std::abs(char_poly(inst.coupling, inst.bg, mu).value), 1e-9);
    // The rounded quoted values (A+B)/2 = 1.027 land within 1e-3 of the root.
    EXPECT_LT(std::abs(char_poly(inst.coupling, inst.bg, 0.5 * (1.1 + 0.954)).value), 2e-2);
}

TEST(CharPoly, ValueAtZero) {
    const auto inst = reference_pair();
    const auto ev = char_poly(inst.coupling, inst.bg, 0.0);
    EXPECT_NEAR(ev.value, 3.0, 1e-14);
    EXPECT_EQ(ev.gammas, (std::vector<double>{2.0, 2.0}));
}

TEST(CharPoly, RejectsZeroCrossCoupling) {
    EXPECT_THROW(char_poly(CouplingModel::structured({1.0, 2.0}, 0.0), BackgroundState{{1.0, 1.0}}, 0.5),
                 ConfigError);
}

TEST(CharPoly, MatchesCofactorDeterminant) {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> mud(0.0, 4.0);
    for (int trial = 0; trial < 50; ++trial) {
        const auto inst = kdvred::test::random_structured(rng, 4);
        const auto& s = inst.coupling.structured_form();
        const double mu = mud(rng);
        double scale = 1.0;
        for (std::size_t i = 0; i < 4; ++i) scale *= inst.bg.rho0[i] * s.h;
        const double value = char_poly(inst.coupling, inst.bg, mu).value * scale;
        const double det = static_cast<double>(kdvred::test::structured_char_det(s.g, s.h, inst.bg.rho0, mu));
        EXPECT_LE(std::abs(value - det), 1e-8 * std::max(std::abs(det), 1e-3)) << "trial " << trial;
    }
}

TEST(CharPoly, RootsAreEigenvalues) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t n = 2 + static_cast<std::size_t>(trial % 5);
        const auto inst = kdvred::test::random_structured(rng, n);
        const auto spec = eigensystem(inst.coupling, inst.bg);
        for (Eigen::Index j = 0; j < spec.lambda.size(); ++j) {
            const double mu = spec.lambda(j) * spec.lambda(j);
            // Scale: size of the largest term of the polynomial at this mu.
            const auto ev = char_poly(inst.coupling, inst.bg, mu);
            const auto e = symprod::elem_sym_all<double>(ev.gammas);
            double scale = 1.0;
            for (double x : e) scale = std::max(scale, std::abs(x) * static_cast<double>(n));
            EXPECT_LT(std::abs(ev.value), 1e-8 * scale);
        }
    }
}

TEST(CharPoly, TwoGroupFactorization) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> gd(0.8, 3.0), rd(0.2, 2.0), mud(0.0, 5.0);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t m = 2 + static_cast<std::size_t>(trial % 2);
        const std::size_t mp = 2 + static_cast<std::size_t>((trial / 2) % 2);
        const std::size_t rest = static_cast<std::size_t>(trial % 4);
        std::vector<double> g, rho;
        const double gs = gd(rng), rs = rd(rng), gp = gd(rng), rp = rd(rng);
        for (std::size_t i = 0; i < m; ++i) { g.push_back(gs); rho.push_back(rs); }
        for (std::size_t i = 0; i < mp; ++i) { g.push_back(gp); rho.push_back(rp); }
        for (std::size_t i = 0; i < rest; ++i) { g.push_back(gd(rng)); rho.push_back(rd(rng)); }
        const auto c = CouplingModel::structured(g, 0.3);
        const BackgroundState bg{rho};
        for (int k = 0; k < 10; ++k) {
            const double mu = mud(rng);
            const double direct = char_poly(c, bg, mu).value;
            const double factored = two_group_factored_char_poly(c, bg, mu);
            EXPECT_LE(std::abs(direct - factored), 1e-8 * std::max(1.0, std::abs(direct)));
        }
    }
}

TEST(Degeneracy, N3SimplePair) {
    const auto c = CouplingModel::structured({1.0, 1.0, 2.0}, 0.5);
    const BackgroundState bg{{1.0, 1.0, 0.5}};
    const auto r = degeneracy_report(c, bg);
    ASSERT_EQ(r.repeated.size(), 1u);
    EXPECT_EQ(r.repeated[0].group, (std::vector<std::size_t>{0, 1}));
    EXPECT_EQ(r.repeated[0].multiplicity, 1u);
    EXPECT_DOUBLE_EQ(r.repeated[0].lambda(), std::sqrt(0.5));
    EXPECT_EQ(r.groups.size(), 2u);
}

TEST(Degeneracy, N2DistinctHasNoRepeatedRoots) {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 50; ++i) {
        const auto inst = kdvred::test::random_structured(rng, 2);
        EXPECT_FALSE(degeneracy_report(inst.coupling, inst.bg).has_repeated());
        const auto spec = eigensystem(inst.coupling, inst.bg);
        EXPECT_GT(spec.lambda(1) - spec.lambda(0), 0.0);
    }
}

TEST(Degeneracy, AllFourEqual) {
    const auto c = CouplingModel::structured({2.0, 2.0, 2.0, 2.0}, 0.7);
    const BackgroundState bg{{0.5, 0.5, 0.5, 0.5}};
    const auto r = degeneracy_report(c, bg);
    ASSERT_EQ(r.repeated.size(), 1u);
    EXPECT_EQ(r.repeated[0].multiplicity, 3u);
    EXPECT_DOUBLE_EQ(r.repeated[0].lambda_squared, 0.5 * (2.0 - 0.7));
    const auto spec = eigensystem(c, bg);
    for (Eigen::Index j = 0; j < 3; ++j) EXPECT_NEAR(spec.lambda(j), std::sqrt(0.65), 1e-12);
    EXPECT_EQ(spec.multiplicity(0), 3u);
}

TEST(Degeneracy, UnstableGroupIsFlaggedNotThrown) {
    const auto c = CouplingModel::structured({1.0, 1.0}, 1.5);
    const auto r = degeneracy_report(c, BackgroundState{{1.0, 1.0}});
    ASSERT_EQ(r.repeated.size(), 1u);
    EXPECT_FALSE(r.repeated[0].is_real());
    EXPECT_TRUE(std::isnan(r.repeated[0].lambda()));
}

TEST(Degeneracy, SameProductDifferentDensityIsNotDegenerate) {
    // rho g equal but rho differs.
    const auto c = CouplingModel::structured({1.0, 2.0}, 0.3);
    EXPECT_FALSE(degeneracy_report(c, BackgroundState{{1.0, 0.5}}).has_repeated());
}

TEST(Eigensystem, ReferencePairSoundSpeeds) {
    const auto inst = reference_pair();
    const auto spec = eigensystem(inst.coupling, inst.bg);
    EXPECT_NEAR(spec.lambda(0), 0.270, 1e-3);
    EXPECT_NEAR(spec.lambda(1), 1.013, 1e-3);
    // Fast column of Q: q1 / q2 = (C + B) / (2 h rho01).
    const double b = std::sqrt(1.0 - 0.2 + 0.1 + 0.01);
    EXPECT_NEAR(spec.Q(0, 1) / spec.Q(1, 1), (0.9 + b) / 1.0, 1e-12);
    EXPECT_NEAR(spec.Q(0, 1) / spec.Q(1, 1), 1.854, 1e-3);
    EXPECT_DOUBLE_EQ(spec.Q(1, 1), 1.0);
}

TEST(Eigensystem, DecoupledLimit) {
    const auto c = CouplingModel::structured({3.0, 1.0, 2.0}, 0.0);
    const BackgroundState bg{{1.0, 0.5, 2.0}};
    const auto spec = eigensystem(c, bg);
    EXPECT_NEAR(spec.lambda(0), std::sqrt(0.5), 1e-14);
    EXPECT_NEAR(spec.lambda(1), std::sqrt(3.0), 1e-14);
    EXPECT_NEAR(spec.lambda(2), std::sqrt(4.0), 1e-14);
    for (Eigen::Index j = 0; j < 3; ++j) {
        EXPECT_NEAR(spec.Q.col(j).cwiseAbs().sum(), 1.0, 1e-14);
    }
}

TEST(Eigensystem, RejectsIndefiniteCoupling) {
    const auto c = CouplingModel::structured({1.0, 4.0}, 2.5);
    try {
        eigensystem(c, BackgroundState{{1.0, 1.0}});
        FAIL() << "expected UnstableBackground";
    } catch (const UnstableBackground& e) {
        EXPECT_FALSE(e.report().is_positive_definite);
        EXPECT_FALSE(*e.report().necessary_pass);
    }
}

TEST(Eigensystem, Postconditions) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + static_cast<std::size_t>(trial % 8);
        const auto inst = kdvred::test::random_structured(rng, n);
        for (auto norm : {EigenvectorNormalization::LastComponent, EigenvectorNormalization::LargestEntry}) {
            const auto spec = eigensystem(inst.coupling, inst.bg, norm);
            const Eigen::MatrixXd ar = inst.coupling.alpha() * inst.bg.rho().asDiagonal();
            const Eigen::MatrixXd lam2 = spec.lambda.cwiseAbs2().asDiagonal();
            EXPECT_LT((ar * spec.Q - spec.Q * lam2).norm() / ar.norm(), 1e-10);
            const Eigen::MatrixXd l = spec.Q.transpose() * inst.bg.rho().asDiagonal() * spec.Q;
            const double off = (l - Eigen::MatrixXd(l.diagonal().asDiagonal())).cwiseAbs().maxCoeff();
            EXPECT_LT(off, 1e-10 * l.diagonal().maxCoeff());
            EXPECT_GT(spec.L.minCoeff(), 0.0);
            for (Eigen::Index k = 0; k < spec.L.size(); ++k) {
                double direct = 0.0;
                for (Eigen::Index i = 0; i < spec.Q.rows(); ++i) direct += inst.bg.rho0[i] * spec.Q(i, k) * spec.Q(i, k);
                EXPECT_NEAR(spec.L(k), direct, 1e-12 * direct);
            }
            const auto a = assemble_block_matrix(inst.coupling, inst.bg);
            const Eigen::MatrixXd tl = spec.signed_eigenvalues().asDiagonal();
            EXPECT_LT((a * spec.V - spec.V * tl).norm() / a.norm(), 1e-10);
            const auto ni = static_cast<Eigen::Index>(2 * n);
            EXPECT_LT((spec.V * spec.W.transpose() - Eigen::MatrixXd::Identity(ni, ni)).cwiseAbs().maxCoeff(), 1e-10);
            EXPECT_LT((spec.W * spec.V.transpose() - Eigen::MatrixXd::Identity(ni, ni)).cwiseAbs().maxCoeff(), 1e-10);
            for (Eigen::Index j = 1; j < spec.lambda.size(); ++j) EXPECT_GE(spec.lambda(j), spec.lambda(j - 1));
        }
    }
}

TEST(Eigensystem, SpectralSymmetryAgainstGeneralSolver) {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t n = 1 + static_cast<std::size_t>(trial % 8);
        const auto inst = kdvred::test::random_structured(rng, n);
        const auto spec = eigensystem(inst.coupling, inst.bg);
        Eigen::EigenSolver<Eigen::MatrixXd> general(assemble_block_matrix(inst.coupling, inst.bg), false);
        std::vector<double> re, expected;
        for (Eigen::Index i = 0; i < general.eigenvalues().size(); ++i) {
            EXPECT_LT(std::abs(general.eigenvalues()(i).imag()), 1e-8);
            re.push_back(general.eigenvalues()(i).real());
        }
        for (Eigen::Index j = 0; j < spec.lambda.size(); ++j) {
            expected.push_back(spec.lambda(j));
            expected.push_back(-spec.lambda(j));
        }
        std::sort(re.begin(), re.end());
        std::sort(expected.begin(), expected.end());
        for (std::size_t i = 0; i < re.size(); ++i) EXPECT_NEAR(re[i], expected[i], 1e-8);
    }
}

TEST(Eigensystem, SimilarityWithNonsymmetricProduct) {
    std::mt19937_64 rng(29);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t n = 2 + static_cast<std::size_t>(trial % 7);
        const auto inst = kdvred::test::random_structured(rng, n);
        const auto spec = eigensystem(inst.coupling, inst.bg);
        const Eigen::MatrixXd ar = inst.coupling.alpha() * inst.bg.rho().asDiagonal();
        Eigen::EigenSolver<Eigen::MatrixXd> general(ar, false);
        std::vector<double> mu;
        for (Eigen::Index i = 0; i < general.eigenvalues().size(); ++i) mu.push_back(general.eigenvalues()(i).real());
        std::sort(mu.begin(), mu.end());
        for (std::size_t i = 0; i < mu.size(); ++i) {
            EXPECT_NEAR(mu[i], spec.lambda(static_cast<Eigen::Index>(i)) * spec.lambda(static_cast<Eigen::Index>(i)), 1e-8);
        }
    }
}

TEST(Eigensystem, GeneralSymmetricCoupling) {
    Eigen::Matrix3d a;
    a << 2.0, 0.3, -0.2, 0.3, 1.5, 0.4, -0.2, 0.4, 1.0;
    const auto c = CouplingModel::general(a);
    const BackgroundState bg{{0.7, 1.2, 0.4}};
    const auto spec = eigensystem(c, bg);
    const Eigen::MatrixXd ar = a * bg.rho().asDiagonal();
    EXPECT_LT((ar * spec.Q - spec.Q * Eigen::MatrixXd(spec.lambda.cwiseAbs2().asDiagonal())).norm(), 1e-12);
}

TEST(Eigensystem, AsymmetricAlphaRejected) {
    Eigen::Matrix2d a;
    a << 1.0, 0.3, 0.2, 1.0;
    EXPECT_THROW(CouplingModel::general(a), ConfigError);
}

TEST(Eigensystem, DegeneratePairUsesExactVector) {
    const auto c = CouplingModel::structured({1.0, 1.0, 2.0}, 0.3);
    const BackgroundState bg{{1.0, 1.0, 0.5}};
    const auto spec = eigensystem(c, bg);
    const double lam = std::sqrt(0.7);
    Eigen::Index j = 0;
    (spec.lambda.array() - lam).abs().minCoeff(&j);
    EXPECT_DOUBLE_EQ(spec.lambda(j), lam);
    EXPECT_EQ(spec.Q(2, j), 0.0);
    EXPECT_EQ(spec.Q(0, j), -spec.Q(1, j));
    EXPECT_EQ(spec.multiplicity(static_cast<std::size_t>(j)), 1u);
}

TEST(DegenerateVectors, SingleExtraIndex) {
    const auto c = CouplingModel::structured({1.0, 1.0, 2.0}, 0.5);
    const BackgroundState bg{{1.0, 1.0, 0.5}};
    const double lam = std::sqrt(0.5);
    const auto vs = degenerate_eigenvectors({0, 1}, +1, c, bg, lam);
    ASSERT_EQ(vs.size(), 1u);
    EXPECT_EQ(Eigen::VectorXd(vs[0].tail(3)), (Eigen::VectorXd(3) << 1.0, -1.0, 0.0).finished());
    const auto a = assemble_block_matrix(c, bg);
    EXPECT_LT((a * vs[0] - lam * vs[0]).norm(), 1e-12);
    const auto left = degenerate_eigenvectors({0, 1}, -1, c, bg, lam);
    EXPECT_LT((a * left[0] + lam * left[0]).norm(), 1e-12);
}

TEST(DegenerateVectors, TwoIndependentVectors) {
    const auto c = CouplingModel::structured({1.5, 1.5, 1.5, 0.8}, 0.4);
    const BackgroundState bg{{0.6, 0.6, 0.6, 1.0}};
    const double lam = std::sqrt(0.6 * (1.5 - 0.4));
    const auto vs = degenerate_eigenvectors({0, 1, 2}, +1, c, bg, lam);
    ASSERT_EQ(vs.size(), 2u);
    EXPECT_EQ(Eigen::VectorXd(vs[0].tail(4)), (Eigen::VectorXd(4) << 1, -1, 0, 0).finished());
    EXPECT_EQ(Eigen::VectorXd(vs[1].tail(4)), (Eigen::VectorXd(4) << 1, 0, -1, 0).finished());
    Eigen::MatrixXd m(8, 2);
    m << vs[0], vs[1];
    EXPECT_EQ(Eigen::FullPivLU<Eigen::MatrixXd>(m).rank(), 2);
    const auto a = assemble_block_matrix(c, bg);
    for (const auto& v : vs) EXPECT_LT((a * v - lam * v).norm(), 1e-12);
}

TEST(DegenerateVectors, RejectsNonDegenerateIndices) {
    const auto c = CouplingModel::structured({1.0, 1.0, 2.0}, 0.5);
    const BackgroundState bg{{1.0, 1.0, 0.5}};
    EXPECT_THROW(degenerate_eigenvectors({0, 2}, +1, c, bg, std::sqrt(0.5)), ConfigError);
    EXPECT_THROW(degenerate_eigenvectors({0, 1}, +1, c, bg, 0.9), ConfigError);
}
