#include <cmath>
#include <random>

#include "doctest.h"
#include "geoinv/core/grid.hpp"
#include "oracles.hpp"

using namespace geoinv;

TEST_SUITE("grid") {
  TEST_CASE("linear index round-trips with x fastest") {
    const VoxelGrid g(3, 4, 5, 2.0);
    CHECK(g.size() == 60);
    CHECK(g.cell_volume() == 8.0);
    CHECK(g.flatten(1, 0, 0) == 1);
    CHECK(g.flatten(0, 1, 0) == 3);
    CHECK(g.flatten(0, 0, 1) == 12);
    for (std::size_t iz = 0; iz < 5; ++iz)
      for (std::size_t iy = 0; iy < 4; ++iy)
        for (std::size_t ix = 0; ix < 3; ++ix) {
          const auto c = g.unflatten(g.flatten(ix, iy, iz));
          CHECK(c == CellIndex{ix, iy, iz});
        }
  }

  TEST_CASE("cell geometry uses the minimum corner and z up") {
    const VoxelGrid g(2, 2, 2, 10.0, {100.0, 200.0, -20.0});
    const Vec3 c = g.cell_center(g.flatten(1, 0, 1));
    CHECK(c.x == doctest::Approx(115.0));
    CHECK(c.y == doctest::Approx(205.0));
    CHECK(c.z == doctest::Approx(-5.0));
    CHECK(g.top() == doctest::Approx(0.0));
  }

  TEST_CASE("grid rejects invalid shapes") {
    CHECK_THROWS_AS(VoxelGrid(0, 1, 1, 1.0), Error);
    CHECK_THROWS_AS(VoxelGrid(1, 1, 1, 0.0), Error);
    CHECK_THROWS_AS(VoxelGrid(1, 1, 1, -1.0), Error);
  }

  TEST_CASE("volume length and susceptibility sign are enforced") {
    const VoxelGrid g(2, 1, 1, 1.0);
    CHECK_THROWS_AS(PropertyVolume(g, PropertyKind::Density, {1.0}), Error);
    CHECK_THROWS_AS(PropertyVolume(g, PropertyKind::Susceptibility, {0.1, -0.1}), Error);
    CHECK_THROWS_AS(PropertyVolume(g, PropertyKind::Phase, {0.0, NAN}), Error);
    CHECK_NOTHROW(PropertyVolume(g, PropertyKind::Phase, {-2.0, 3.0}));
  }

  TEST_CASE("chi to phi endpoints and midpoint") {
    const ChiBounds b{0.0, 1.09};
    CHECK(chi_to_phi(0.0, b) == -1.0);
    CHECK(chi_to_phi(1.09, b) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(chi_to_phi(0.545, b) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(phi_to_chi(1.0, b) == doctest::Approx(1.09));
    CHECK(phi_to_chi(0.0, b) == doctest::Approx(0.545));

    const ChiBounds c{0.01, 0.2};
    const VoxelGrid g(4, 1, 1, 1.0);
    const PropertyVolume host(g, PropertyKind::Susceptibility, std::vector<double>(4, 0.01));
    const auto host_phi = chi_to_phi(host, c);
    for (double v : host_phi.values()) CHECK(v == doctest::Approx(-1.0).epsilon(1e-15));
    const PropertyVolume mid(g, PropertyKind::Susceptibility, std::vector<double>(4, c.midpoint()));
    const auto mid_phi = chi_to_phi(mid, c);
    for (double v : mid_phi.values()) CHECK(std::abs(v) < 1e-15);
  }

  TEST_CASE("chi/phi maps are exact mutual inverses and monotone") {
    const ChiBounds b{0.02, 0.7};
    std::mt19937_64 rng(3);
    std::normal_distribution<double> d(0.0, 2.0);
    double prev_chi = -10.0, prev_phi = chi_to_phi(-10.0, b);
    for (int i = 0; i < 1000; ++i) {
      const double x = d(rng);
      CHECK(std::abs(phi_to_chi(chi_to_phi(x, b), b) - x) <= 1e-12 * std::max(1.0, std::abs(x)));
      CHECK(std::abs(chi_to_phi(phi_to_chi(x, b), b) - x) <= 1e-12 * std::max(1.0, std::abs(x)));
      const double chi = prev_chi + 0.01 + std::abs(d(rng)) * 0.01;
      const double phi = chi_to_phi(chi, b);
      CHECK(phi > prev_phi);
      prev_chi = chi;
      prev_phi = phi;
    }
  }

  TEST_CASE("out-of-range susceptibility is mapped without clamping") {
    const ChiBounds b{0.0, 1.0};
    CHECK(chi_to_phi(2.0, b) == doctest::Approx(3.0));
  }

  TEST_CASE("invalid bounds") {
    const ChiBounds bad{0.5, 0.5};
    const VoxelGrid g(1, 1, 1, 1.0);
    const PropertyVolume chi(g, PropertyKind::Susceptibility, {0.1});
    try {
      (void)chi_to_phi(chi, bad);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidBounds);
    }
    CHECK_THROWS_AS((void)chi_to_phi(chi, ChiBounds{-0.1, 1.0}), Error);
  }

  TEST_CASE("log transform values and round trip") {
    const VoxelGrid g(3, 1, 1, 1.0);
    const PropertyVolume chi(g, PropertyKind::Susceptibility, {0.0, 1.09 - 1e-4, 0.3});
    const PropertyVolume x = log_transform(chi, 1e-4);
    CHECK(x.kind() == PropertyKind::LogSusceptibility);
    CHECK(x[0] == doctest::Approx(-4.0).epsilon(1e-14));
    // high-precision log10(1.09)
    CHECK(std::abs(x[1] - 0.037426497940623635) < 1e-14);

    std::mt19937_64 rng(9);
    std::exponential_distribution<double> e(5.0);
    std::vector<double> vals(512);
    for (double& v : vals) v = e(rng);
    const VoxelGrid g2(8, 8, 8, 1.0);
    const PropertyVolume r(g2, PropertyKind::Susceptibility, vals);
    const PropertyVolume back = inverse_log_transform(log_transform(r));
    double worst = 0.0;
    for (std::size_t i = 0; i < vals.size(); ++i) worst = std::max(worst, std::abs(back[i] - vals[i]));
    CHECK(worst < 1e-12);
  }

  TEST_CASE("log transform rejects negative susceptibility") {
    const VoxelGrid g(1, 1, 1, 1.0);
    const PropertyVolume phase(g, PropertyKind::Phase, {-0.5});
    CHECK_THROWS_AS((void)log_transform(phase), Error);
    CHECK_THROWS_AS((void)log_transform(PropertyVolume(g, PropertyKind::Susceptibility, {0.0}), 0.0),
                    Error);
  }

  TEST_CASE("stack and unstack") {
    const VoxelGrid g(2, 1, 1, 1.0);
    const JointModel m(PropertyVolume(g, PropertyKind::Density, {1.0, 2.0}),
                       PropertyVolume(g, PropertyKind::Susceptibility, {3.0, 4.0}));
    const auto v = stack(m);
    CHECK(v == std::vector<double>{1.0, 2.0, 3.0, 4.0});
    CHECK(v[g.size()] == 3.0);
    CHECK(unstack(v, g) == m);
    CHECK_THROWS_AS((void)unstack(std::vector<double>{1.0, 2.0, 3.0}, g), Error);
  }

  TEST_CASE("joint model requires identical grids") {
    const VoxelGrid a(2, 1, 1, 1.0), b(2, 1, 1, 2.0);
    CHECK_THROWS_AS(JointModel(PropertyVolume(a, PropertyKind::Density),
                               PropertyVolume(b, PropertyKind::Susceptibility)),
                    Error);
  }

  TEST_CASE("survey points must sit strictly above the grid") {
    const VoxelGrid g(2, 2, 2, 1.0);
    CHECK_THROWS_AS(SurveyGeometry({}), Error);
    CHECK_THROWS_AS(SurveyGeometry({{0.5, 0.5, 2.0}}, g), Error);
    CHECK_NOTHROW(SurveyGeometry({{0.5, 0.5, 2.5}}, g));
    const auto s = regular_survey(g, 3, 2, 1.0);
    CHECK(s.size() == 6);
    for (const auto& p : s.points()) CHECK(p.z == doctest::Approx(3.0));
  }
}
