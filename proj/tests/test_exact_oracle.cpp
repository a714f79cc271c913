#include <catch2/catch_amalgamated.hpp>

#include <kpz/exact_oracle.hpp>

using namespace kpz;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Eigen::Index at(const StateSpace& sp, const std::string& bits)
{
    return static_cast<Eigen::Index>(sp.index_of(StateSpace::mask_of(bits_from_string(bits))));
}

Eigen::MatrixXd random_generator(std::mt19937_64& rng, Eigen::Index n)
{
    std::uniform_real_distribution<double> u(0, 2);
    Eigen::MatrixXd Q(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j)
            Q(i, j) = i == j ? 0 : u(rng);
        Q(i, i) = -Q.row(i).sum();
    }
    return Q;
}

Errc code_of(auto&& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return Errc::InvalidArgument;
}

} // namespace

TEST_CASE("state space enumeration is a bijection")
{
    auto seg = make_state_space(5, Boundary::ClosedSegment);
    CHECK(seg.size() == 32);
    auto ring = make_state_space(6, Boundary::PeriodicRing, 2);
    CHECK(ring.size() == 15);
    for (const auto* sp : {&seg, &ring})
        for (std::size_t i = 0; i < sp->size(); ++i) {
            CHECK(sp->index_of(sp->masks[i]) == i);
            CHECK(sp->index_of(StateSpace::mask_of(sp->bits(i))) == i);
        }
    CHECK(code_of([] { make_state_space(15, Boundary::ClosedSegment); }) == Errc::TooLarge);
    CHECK_THROWS(make_state_space(4, Boundary::PeriodicRing));
}

TEST_CASE("generator matrix examples")
{
    auto sp = make_state_space(2, Boundary::ClosedSegment);
    auto Q = generator_matrix(sp, ModelSpec::tasep());
    CHECK(Q(at(sp, "10"), at(sp, "01")) == 1);
    CHECK(Q(at(sp, "10"), at(sp, "10")) == -1);
    CHECK((Q.array() != 0).count() == 2);
    CHECK(Q.row(at(sp, "11")).isZero());
    CHECK(Q.row(at(sp, "00")).isZero());

    auto big = make_state_space(6, Boundary::ClosedSegment);
    auto S = generator_matrix(big, ModelSpec::asep(0.4, 0.4));
    CHECK((S - S.transpose()).cwiseAbs().maxCoeff() == 0);

    for (auto spec : {ModelSpec::tasep(), ModelSpec::asep(0.7, 0.3), ModelSpec::aep({{1, 1.0 / 3}, {2, 1.0 / 3}})}) {
        auto G = generator_matrix(big, spec);
        CHECK(G.rowwise().sum().cwiseAbs().maxCoeff() <= 1e-13);
        for (Eigen::Index i = 0; i < G.rows(); ++i)
            for (Eigen::Index j = 0; j < G.cols(); ++j)
                if (i != j)
                    CHECK(G(i, j) >= 0);
    }
}

TEST_CASE("uniform measure is invariant on the ring and for symmetric rates")
{
    auto ring = make_state_space(7, Boundary::PeriodicRing, 3);
    auto seg = make_state_space(7, Boundary::ClosedSegment);
    for (auto spec : {ModelSpec::tasep(), ModelSpec::asep(0.7, 0.3), ModelSpec::aep({{1, 0.5}, {-2, 0.25}, {3, 0.1}})}) {
        auto Q = generator_matrix(ring, spec);
        CHECK(Q.colwise().sum().cwiseAbs().maxCoeff() <= 1e-12);
    }
    auto Q = generator_matrix(seg, ModelSpec::asep(0.5, 0.5));
    CHECK(Q.colwise().sum().cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("transition matrix examples")
{
    auto sp = make_state_space(4, Boundary::ClosedSegment);
    auto Q = generator_matrix(sp, ModelSpec::asep(0.7, 0.3));
    CHECK(transition_matrix(Q, 0).isIdentity());

    Eigen::Matrix2d two;
    two << -1, 1, 0, 0;
    CHECK_THAT(transition_matrix(two, 1)(0, 1), WithinAbs(1 - std::exp(-1.0), 1e-12));

    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        auto R = random_generator(rng, 12);
        auto P = transition_matrix(R, 0.7, 1e-12);
        CHECK((P.rowwise().sum().array() - 1).abs().maxCoeff() <= 10e-12);
        CHECK(P.minCoeff() >= -1e-15);
    }
    CHECK_THROWS(transition_matrix(Q, -1));
}

TEST_CASE("semigroup property")
{
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0, 1.5);
    for (int trial = 0; trial < 20; ++trial) {
        auto Q = random_generator(rng, 10);
        double s = u(rng), t = u(rng);
        Eigen::MatrixXd lhs = transition_matrix(Q, t) * transition_matrix(Q, s);
        CHECK((lhs - transition_matrix(Q, t + s)).cwiseAbs().maxCoeff() <= 100e-12);
    }
}

TEST_CASE("vector uniformization agrees with the matrix")
{
    auto sp = make_state_space(6, Boundary::ClosedSegment);
    auto Q = generator_matrix(sp, ModelSpec::aep({{1, 1.0 / 3}, {2, 1.0 / 3}}));
    Eigen::MatrixXd P = transition_matrix(Q, 1.5);
    Eigen::VectorXd f = Eigen::VectorXd::LinSpaced(Q.rows(), -1, 1);
    CHECK((apply_semigroup(Q, 1.5, f) - P * f).cwiseAbs().maxCoeff() <= 1e-11);
    Eigen::RowVectorXd mu = Eigen::RowVectorXd::Zero(Q.rows());
    mu(3) = 1;
    CHECK((evolve_distribution(Q, 1.5, mu) - mu * P).cwiseAbs().maxCoeff() <= 1e-11);
}

TEST_CASE("dirichlet form examples")
{
    auto two = make_state_space(2, Boundary::ClosedSegment);
    Eigen::VectorXd eta0(4);
    for (std::size_t i = 0; i < two.size(); ++i)
        eta0(static_cast<Eigen::Index>(i)) = two.masks[i] & 1u;
    CHECK_THAT(dirichlet_form(two, eta0, {{1, 1.0}}), WithinAbs(0.5, 1e-15));

    auto sp = make_state_space(6, Boundary::ClosedSegment);
    RateMap law{{1, 1.0 / 3}, {2, 1.0 / 3}};
    CHECK(dirichlet_form(sp, Eigen::VectorXd::Constant(64, 3.0), law) == 0);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> z;
    Eigen::VectorXd f(64);
    for (auto& v : f)
        v = z(rng);
    CHECK_THAT(dirichlet_form(sp, (f.array() + 2.5).matrix(), law), WithinRel(dirichlet_form(sp, f, law), 1e-12));
    CHECK_THROWS(dirichlet_form(sp, Eigen::VectorXd::Zero(3), law));
}

TEST_CASE("dirichlet form is four times the symmetrized generator energy")
{
    std::mt19937_64 rng(2);
    std::normal_distribution<double> z;
    auto ring = make_state_space(8, Boundary::PeriodicRing, 3);
    auto seg = make_state_space(7, Boundary::ClosedSegment);
    struct Case {
        const StateSpace* sp;
        ModelSpec spec;
    };
    for (const auto& c : {Case{&ring, ModelSpec::tasep()}, Case{&ring, ModelSpec::aep({{1, 0.5}, {2, 0.3}, {-1, 0.1}})},
                          Case{&seg, ModelSpec::asep(0.5, 0.5)}}) {
        auto Q = generator_matrix(*c.sp, c.spec);
        for (int trial = 0; trial < 5; ++trial) {
            Eigen::VectorXd f(Q.rows());
            for (auto& v : f)
                v = z(rng);
            CHECK_THAT(dirichlet_form(*c.sp, f, c.spec.micro_rates()), WithinRel(4 * symmetrized_energy(Q, f), 1e-12));
        }
    }
}

TEST_CASE("comparability constants")
{
    auto sp = make_state_space(6, Boundary::ClosedSegment);
    auto id = comparability_constants(sp, {{1, 1.0}});
    CHECK_THAT(id.upper, WithinAbs(1, 1e-10));
    CHECK_THAT(id.lower, WithinAbs(1, 1e-10));
    auto sym = comparability_constants(sp, {{1, 0.5}, {-1, 0.5}});
    CHECK_THAT(sym.upper, WithinAbs(1, 1e-10));
    CHECK_THAT(sym.lower, WithinAbs(1, 1e-10));

    RateMap law{{1, 1.0 / 3}, {2, 1.0 / 3}};
    auto base = comparability_constants(sp, law);
    auto scaled = comparability_constants(sp, {{1, 7.0}, {2, 7.0}});
    CHECK_THAT(scaled.upper, WithinRel(base.upper, 1e-10));
    CHECK_THAT(scaled.lower, WithinRel(base.lower, 1e-10));
    CHECK(std::isfinite(base.upper));
    CHECK(base.upper >= 1);

    auto ring = comparability_constants(make_state_space(6, Boundary::PeriodicRing, 3), law);
    CHECK(std::isfinite(ring.upper));
    CHECK(std::isfinite(ring.lower));

    CHECK(code_of([&] { comparability_constants(sp, {{2, 1.0}}); }) == Errc::Reducible);
    CHECK(code_of([&] { comparability_constants(make_state_space(1, Boundary::ClosedSegment), {{1, 1.0}}); }) ==
          Errc::Degenerate);
}

TEST_CASE("skew-time reversibility")
{
    auto sp = make_state_space(6, Boundary::ClosedSegment);
    std::mt19937_64 rng(14);
    std::uniform_int_distribution<int> bit(0, 1);
    std::uniform_real_distribution<double> u(-3, 3);
    for (auto spec : {ModelSpec::asep(0.5, 0.5), ModelSpec::asep(0.7, 0.3), ModelSpec::tasep()}) {
        for (int trial = 0; trial < 10; ++trial) {
            std::vector<std::uint8_t> bits(6);
            for (auto& b : bits)
                b = static_cast<std::uint8_t>(bit(rng));
            auto f = make_field(bits, std::round(u(rng)));
            ProfileSpec g{{{0, u(rng) + 1}, {3, u(rng) + 1}, {6, u(rng) + 1}}, 0, 0};
            CHECK(skew_reversibility_gap(sp, spec, 0, f, g).gap == 0);
            if (spec.kind == ModelSpec::Kind::TASEP)
                CHECK(skew_reversibility_gap(sp, spec, 1, f, g).gap <= 1e-12);
        }
    }
    auto f = make_field(bits_from_string("101010"), 0);
    CHECK(code_of([&] {
              skew_reversibility_gap(sp, ModelSpec::aep({{1, 1.0 / 3}, {2, 1.0 / 3}}), 1, f, ProfileSpec::constant(2));
          }) == Errc::NotNearestNeighbor);
    CHECK_NOTHROW(
        skew_reversibility_gap(sp, ModelSpec::aep({{1, 1.0 / 3}, {2, 1.0 / 3}}), 1, f, ProfileSpec::constant(2), true));
}

TEST_CASE("skew gap for the reversible-rate models at small time")
{
    // f = g = V: the forward side loses rate q at the touching minimum, the backward side has no
    // touching maximum, so the gap is q t + O(t^2)
    auto sp = make_state_space(6, Boundary::ClosedSegment);
    auto v = make_field(bits_from_string("000111"), 0);
    ProfileSpec g{{{3, -3}}, -1, 1};
    const double t = 1e-5;
    for (auto [p, q] : {std::pair{0.5, 0.5}, std::pair{0.7, 0.3}}) {
        auto r = skew_reversibility_gap(sp, ModelSpec::asep(p, q), t, v, g);
        CHECK_THAT(r.gap / t, WithinRel(q, 1e-4));
        CHECK(r.forward < r.backward);
    }
    CHECK(skew_reversibility_gap(sp, ModelSpec::tasep(), t, v, g).gap <= 1e-15);
}

TEST_CASE("gradient and argmax probabilities coincide")
{
    auto sp = make_state_space(6, Boundary::ClosedSegment);
    for (double t : {0.0, 1.0}) {
        auto r = gradient_argmax_check(sp, ModelSpec::tasep(), t, ProfileSpec::linear(0.5, 1));
        CHECK(r.max_discrepancy <= 1e-9);
        CHECK(r.max_gradient > 0);
        CHECK(r.comparisons > 0);
    }
    auto tent = gradient_argmax_check(make_state_space(5, Boundary::ClosedSegment), ModelSpec::tasep(), 0.7,
                                      ProfileSpec{{{2.5, 2}}, 1, -1});
    CHECK(tent.max_discrepancy <= 1e-9);
    CHECK(code_of([&] { gradient_argmax_check(sp, ModelSpec::asep(0.7, 0.3), 1, ProfileSpec::constant(0)); }) ==
          Errc::NotTASEP);
}

TEST_CASE("semigroup difference")
{
    auto sp = make_state_space(6, Boundary::ClosedSegment);
    Eigen::VectorXd f0 = Eigen::VectorXd::Ones(64);
    TargetSet set{TargetMode::Hyp, ProfileSpec::constant(1)};
    auto same = semigroup_difference(sp, ModelSpec::tasep(), ModelSpec::tasep(), f0, set, 1);
    CHECK(same.lhs == 0);
    auto zero = semigroup_difference(sp, ModelSpec::tasep(), ModelSpec::asep_unit_drift(0.9, 0.1), f0, set, 0);
    CHECK(zero.lhs == 0);
    auto diff = semigroup_difference(sp, ModelSpec::tasep(), ModelSpec::asep_unit_drift(0.9, 0.1), f0, set, 1);
    CHECK(diff.lhs > 0);
    CHECK(diff.dirichlet_integral > 0);
    CHECK(std::isfinite(diff.constant));
    CHECK_THAT(diff.f0_norm, WithinAbs(1, 1e-15));
    CHECK_THROWS(semigroup_difference(sp, ModelSpec::tasep(), ModelSpec::tasep(), 2 * f0, set, 1));
}
