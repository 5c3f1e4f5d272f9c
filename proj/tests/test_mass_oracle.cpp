// Exact mass accounting on discrete densities: totals and region
// decompositions against reordered/partition-sum oracles, kernel
// realizations, the mass-reduction bound, and greedy kernel descent with an
// exhaustive argmax replay.

#include <cmath>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "test_util.hpp"
#include "wfopt/errors.hpp"
#include "wfopt/mass_oracle.hpp"
#include "wfopt/rng.hpp"

using namespace wfopt;

namespace {

// 64x64 grid in four equal quadrants with per-region constant values chosen
// so the region masses are 0.50 / 0.30 / 0.15 / 0.05.
DiscreteDensity quadrant_fixture() {
  DiscreteDensity d(64, 64);
  const double values[4] = {2.0, 1.2, 0.6, 0.2};
  for (size_t row = 0; row < 64; ++row) {
    for (size_t col = 0; col < 64; ++col) {
      int region = (row < 32 ? 0 : 2) + (col < 32 ? 0 : 1);
      size_t cell = d.cell_at(col, row);
      d.set_region(cell, region);
      d.set_value(cell, values[region]);
    }
  }
  return d;
}

DiscreteDensity random_density(uint64_t seed, size_t cols = 16,
                               size_t rows = 16, int regions = 4) {
  DiscreteDensity d(cols, rows);
  Rng rng(seed);
  for (size_t i = 0; i < d.cell_count(); ++i) {
    d.set_value(i, rng.uniform(0.0, 2.0));
    d.set_region(i, static_cast<int>(rng.uniform_index(
                        static_cast<uint64_t>(regions))));
  }
  // Guarantee every region label is inhabited.
  for (int r = 0; r < regions; ++r) d.set_region(static_cast<size_t>(r), r);
  return d;
}

}  // namespace

TEST_CASE("total_mass: flat map, uniform grid, and a reordered-sum oracle") {
  DiscreteDensity zero(64, 64);
  CHECK(total_mass(zero) == 0.0);

  // Uniform value 1 over 100 cells of measure 1/100 integrates to exactly 1.
  DiscreteDensity uniform(10, 10);
  for (size_t i = 0; i < 100; ++i) uniform.set_value(i, 1.0);
  CHECK(uniform.cell_measure() == 1.0 / 100.0);
  CHECK(total_mass(uniform) == 1.0);

  // Independent summation in reversed cell order.
  DiscreteDensity d = random_density(5);
  double reversed = 0.0;
  for (size_t i = d.cell_count(); i-- > 0;) reversed += d.value(i);
  reversed *= d.cell_measure();
  CHECK(total_mass(d) == doctest::Approx(reversed).epsilon(1e-12));
}

TEST_CASE("region_mass: support, symmetry, and the partition identity") {
  // All mass inside one region: the region integral is the whole integral.
  DiscreteDensity d(8, 8);
  for (size_t i = 0; i < d.cell_count(); ++i) {
    d.set_region(i, i < 16 ? 1 : 2);
    if (i < 16) d.set_value(i, 0.75);
  }
  CHECK(region_mass(d, 1) == total_mass(d));
  CHECK(region_mass(d, 2) == 0.0);

  // Two equal regions under a uniform density split the mass exactly.
  DiscreteDensity half(8, 8);
  for (size_t i = 0; i < half.cell_count(); ++i) {
    half.set_value(i, 1.0);
    half.set_region(i, i < 32 ? 0 : 1);
  }
  CHECK(total_mass(half) == 1.0);
  CHECK(region_mass(half, 0) == 0.5);
  CHECK(region_mass(half, 1) == 0.5);

  // Random density, random partition: the region masses add back up.
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    DiscreteDensity r = random_density(seed);
    double sum = 0.0;
    for (int region : r.region_ids()) sum += region_mass(r, region);
    CHECK(sum == doctest::Approx(total_mass(r)).epsilon(1e-12));
  }

  CHECK_THROWS_AS(region_mass(d, 99), Error);
  CHECK_THROWS_AS(d.region_cells(99), Error);
}

TEST_CASE("quadrant fixture realizes the 0.50/0.30/0.15/0.05 masses") {
  DiscreteDensity d = quadrant_fixture();
  CHECK(total_mass(d) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(region_mass(d, 0) == doctest::Approx(0.50).epsilon(1e-12));
  CHECK(region_mass(d, 1) == doctest::Approx(0.30).epsilon(1e-12));
  CHECK(region_mass(d, 2) == doctest::Approx(0.15).epsilon(1e-12));
  CHECK(region_mass(d, 3) == doctest::Approx(0.05).epsilon(1e-12));
}

TEST_CASE("apply_kernel: identity, exact removal, spillover, clipping") {
  DiscreteDensity d = quadrant_fixture();

  SUBCASE("identity kernel changes nothing and measures zero") {
    KernelApplication app = apply_kernel(d, EditKernel::identity());
    CHECK(app.density.values() == d.values());
    CHECK(app.realization.delta_realized == 0.0);
    CHECK(app.realization.max_pointwise_change == 0.0);
    CHECK(app.realization.spillover_mass == 0.0);
    CHECK(app.realization.support_cells == 0);
  }

  SUBCASE("full region scale removes exactly the region's mass") {
    double before = region_mass(d, 1);
    KernelApplication app = apply_kernel(d, EditKernel::region_scale(1, 1.0));
    CHECK(region_mass(app.density, 1) == 0.0);
    CHECK(total_mass(app.density) ==
          doctest::Approx(total_mass(d) - before).epsilon(1e-12));
    // Non-target regions are untouched, cell for cell.
    for (size_t i = 0; i < d.cell_count(); ++i) {
      if (d.region(i) != 1) CHECK(app.density.value(i) == d.value(i));
    }
    CHECK(app.realization.delta_realized ==
          doctest::Approx(before).epsilon(1e-12));
    CHECK(app.realization.spillover_mass == 0.0);
    CHECK(app.realization.support_cells == 1024);
  }

  SUBCASE("spillover stays within the declared band and bound") {
    const double bound = 0.1;
    const size_t band = 50;
    EditKernel kernel =
        EditKernel::region_scale_with_spill(1, 0.5, bound, band, 99);
    KernelApplication app = apply_kernel(d, kernel);

    size_t changed_outside = 0;
    double spill = 0.0;
    for (size_t i = 0; i < d.cell_count(); ++i) {
      double change = app.density.value(i) - d.value(i);
      if (d.region(i) == 1) {
        CHECK(change == doctest::Approx(-0.5 * 1.2).epsilon(1e-12));
      } else if (change != 0.0) {
        ++changed_outside;
        CHECK(change > 0.0);
        CHECK(change <= bound);
        spill += change;
      }
    }
    CHECK(changed_outside <= band);
    CHECK(changed_outside > 0);
    CHECK(app.realization.spillover_mass ==
          doctest::Approx(spill * d.cell_measure()).epsilon(1e-12));
    // Sum of bounded bumps over at most `band` cells.
    CHECK(app.realization.spillover_mass <=
          bound * static_cast<double>(band) * d.cell_measure());
    CHECK(app.realization.max_pointwise_change <= 0.5 * 1.2 + 1e-12);
  }

  SUBCASE("results are clipped at zero, never signed") {
    EditKernel rogue("rogue", KernelParams{}, [](DiscreteDensity& x) {
      x.mutable_values()[0] = -5.0;
    });
    KernelApplication app = apply_kernel(d, rogue);
    CHECK(app.density.value(0) == 0.0);
  }

  SUBCASE("the finite-difference bound reads the steepest adjacent jump") {
    DiscreteDensity tiny(2, 2);
    tiny.set_value(0, 0.0);
    tiny.set_value(1, 1.0);
    tiny.set_value(2, 0.25);
    tiny.set_value(3, 0.25);
    KernelApplication app = apply_kernel(tiny, EditKernel::identity());
    // |1 - 0| across one horizontal cell of width 1/2 -> slope 2.
    CHECK(app.realization.lipschitz_fd == 2.0);
  }
}

TEST_CASE("mass-reduction bound: exact cases and the hypothesis gate") {
  DiscreteDensity before = quadrant_fixture();

  SUBCASE("pure target reduction holds with zero spill and zero slack") {
    KernelApplication app =
        apply_kernel(before, EditKernel::region_scale(1, 1.0));
    double delta = app.realization.delta_realized;
    TheoremCheck check =
        check_mass_reduction_bound(before, app.density, 1, delta);
    CHECK(check.applicable);
    CHECK(check.holds);
    CHECK(check.epsilon_realized == 0.0);
    CHECK(check.slack == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("spillover of 0.05 against a 0.3 reduction nets 0.25") {
    // Remove all of region 1 (mass 0.30) and add value 0.2 to every cell of
    // region 3 (1024 cells * 0.2 / 4096 = mass 0.05).
    EditKernel kernel("constructed", KernelParams{}, [](DiscreteDensity& x) {
      for (size_t i = 0; i < x.cell_count(); ++i) {
        if (x.region(i) == 1) x.set_value(i, 0.0);
        if (x.region(i) == 3) x.set_value(i, x.value(i) + 0.2);
      }
    });
    KernelApplication app = apply_kernel(before, kernel);
    TheoremCheck check =
        check_mass_reduction_bound(before, app.density, 1, 0.3);
    CHECK(check.applicable);
    CHECK(check.holds);
    CHECK(check.epsilon_realized == doctest::Approx(0.05).epsilon(1e-12));
    double net = total_mass(before) - total_mass(app.density);
    CHECK(net == doctest::Approx(0.25).epsilon(1e-12));  // delta - epsilon
    CHECK(check.slack == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("extra reduction outside the target only widens the slack") {
    EditKernel kernel("double_cut", KernelParams{}, [](DiscreteDensity& x) {
      for (size_t i = 0; i < x.cell_count(); ++i) {
        if (x.region(i) == 1 || x.region(i) == 2) {
          x.set_value(i, x.value(i) * 0.5);
        }
      }
    });
    KernelApplication app = apply_kernel(before, kernel);
    TheoremCheck check =
        check_mass_reduction_bound(before, app.density, 1, 0.15);
    CHECK(check.applicable);
    CHECK(check.holds);
    CHECK(check.epsilon_realized == 0.0);
    CHECK(check.slack == doctest::Approx(0.075).epsilon(1e-9));
  }

  SUBCASE("an unmet hypothesis is reported, not treated as a violation") {
    KernelApplication app =
        apply_kernel(before, EditKernel::region_scale(1, 0.5));  // drops 0.15
    TheoremCheck check =
        check_mass_reduction_bound(before, app.density, 1, 0.4);
    CHECK_FALSE(check.applicable);
    CHECK_FALSE(check.holds);
  }

  SUBCASE("grid and region mismatches throw") {
    DiscreteDensity small(4, 4);
    CHECK_THROWS_AS(check_mass_reduction_bound(before, small, 1, 0.1), Error);
    CHECK_THROWS_AS(
        check_mass_reduction_bound(before, before, 99, 0.1), Error);
  }

  SUBCASE("100 random hypothesis-satisfying kernels never violate the bound") {
    for (uint64_t seed = 0; seed < 100; ++seed) {
      DiscreteDensity base = random_density(mix_seed(3, "base", seed));
      double delta = 0.0;
      EditKernel kernel = random_hypothesis_kernel(base, seed, &delta);
      KernelApplication app = apply_kernel(base, kernel);
      TheoremCheck check = check_mass_reduction_bound(
          base, app.density, kernel.declared().target_region, delta);
      CHECK(check.applicable);
      CHECK(check.holds);
    }
  }
}

TEST_CASE("greedy descent: argmax order, stationarity, and monotonicity") {
  DiscreteDensity rho0 = quadrant_fixture();

  SUBCASE("identity-only menu is immediately stationary") {
    DescentResult r = greedy_kernel_descent(rho0, {EditKernel::identity()}, 10);
    REQUIRE(r.trajectory.size() == 1);
    CHECK(r.trajectory[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.applied.empty());
  }

  SUBCASE("disjoint targets are picked in decreasing mass order") {
    std::vector<EditKernel> menu;
    menu.push_back(EditKernel::identity());
    menu.push_back(EditKernel::region_scale(1, 1.0));  // 0.30
    menu.push_back(EditKernel::region_scale(2, 1.0));  // 0.15
    menu.push_back(EditKernel::region_scale(3, 1.0));  // 0.05

    DescentResult r = greedy_kernel_descent(rho0, menu, 10);
    CHECK(r.applied == std::vector<size_t>{1, 2, 3});
    REQUIRE(r.trajectory.size() == 4);
    CHECK(r.trajectory[0] == doctest::Approx(1.00).epsilon(1e-12));
    CHECK(r.trajectory[1] == doctest::Approx(0.70).epsilon(1e-12));
    CHECK(r.trajectory[2] == doctest::Approx(0.55).epsilon(1e-12));
    CHECK(r.trajectory[3] == doctest::Approx(0.50).epsilon(1e-12));
    CHECK(total_mass(r.final_density) ==
          doctest::Approx(0.50).epsilon(1e-12));

    // Exhaustive replay: every applied index is the strict argmax among the
    // menu's reductions at that point.
    DiscreteDensity current = rho0;
    for (size_t step = 0; step < r.applied.size(); ++step) {
      double here = total_mass(current);
      double best = -1.0;
      size_t best_i = menu.size();
      for (size_t i = 0; i < menu.size(); ++i) {
        KernelApplication app = apply_kernel(current, menu[i]);
        double reduction = here - total_mass(app.density);
        if (reduction > best) {
          best = reduction;
          best_i = i;
        }
      }
      CHECK(best_i == r.applied[step]);
      current = apply_kernel(current, menu[best_i]).density;
      CHECK(total_mass(current) ==
            doctest::Approx(r.trajectory[step + 1]).epsilon(1e-12));
    }
  }

  SUBCASE("trajectories never increase and never overdraw the initial mass") {
    for (uint64_t seed = 1; seed <= 5; ++seed) {
      DiscreteDensity base = random_density(seed);
      std::vector<EditKernel> menu;
      menu.push_back(EditKernel::identity());
      Rng rng(mix_seed(seed, "menu"));
      for (int k = 0; k < 4; ++k) {
        menu.push_back(EditKernel::region_scale(
            static_cast<int>(rng.uniform_index(4)), rng.uniform(0.1, 0.9)));
      }
      DescentResult r = greedy_kernel_descent(base, menu, 20);
      for (size_t i = 1; i < r.trajectory.size(); ++i) {
        CHECK(r.trajectory[i] <= r.trajectory[i - 1]);
      }
      CHECK(r.trajectory.front() - r.trajectory.back() <=
            r.trajectory.front() + 1e-12);
      for (size_t idx : r.applied) CHECK(idx < menu.size());
      CHECK(r.trajectory.size() == r.applied.size() + 1);
    }
  }

  SUBCASE("zero rounds and empty menus") {
    DescentResult r =
        greedy_kernel_descent(rho0, {EditKernel::region_scale(1, 1.0)}, 0);
    REQUIRE(r.trajectory.size() == 1);
    CHECK(r.applied.empty());
    CHECK_THROWS_AS(greedy_kernel_descent(rho0, {}, 5), Error);
  }
}

TEST_CASE("density construction guards") {
  CHECK_THROWS_AS(DiscreteDensity(0, 4), Error);
  DiscreteDensity d(2, 2);
  CHECK_THROWS_AS(d.set_value(0, -0.5), Error);
  d.mutable_values()[0] = -1.0;
  CHECK_THROWS_AS(d.validate(), Error);
}

TEST_CASE("CSV export: densities and trajectories") {
  wfopt_test::TempDir dir("wfopt-mass");

  SUBCASE("density file bytes for a tiny grid") {
    DiscreteDensity d(2, 2);
    d.set_value(0, 0.0);
    d.set_value(1, 1.0);
    d.set_value(2, 0.25);
    d.set_value(3, 0.25);
    d.set_region(2, 1);
    d.set_region(3, 1);
    auto path = dir.path() / "density.csv";
    write_density_csv(d, path);
    std::ifstream in(path, std::ios::binary);
    std::string text((std::istreambuf_iterator<char>(in)), {});
    CHECK(text ==
          "cell,x,y,region,value\n"
          "0,0.25,0.25,0,0\n"
          "1,0.75,0.25,0,1\n"
          "2,0.25,0.75,1,0.25\n"
          "3,0.75,0.75,1,0.25\n");
  }

  SUBCASE("trajectory round-trips through max-precision text") {
    std::vector<double> trajectory = {1.0, 0.7, 0.55, 0.5};
    auto path = dir.path() / "trajectory.csv";
    write_trajectory_csv(trajectory, path);
    std::ifstream in(path);
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "round,mass");
    for (size_t i = 0; i < trajectory.size(); ++i) {
      REQUIRE(std::getline(in, line));
      size_t comma = line.find(',');
      CHECK(line.substr(0, comma) == std::to_string(i));
      CHECK(std::stod(line.substr(comma + 1)) == trajectory[i]);
    }
    CHECK_FALSE(std::getline(in, line));
  }

  SUBCASE("unwritable paths raise IO failures") {
    DiscreteDensity d(2, 2);
    CHECK_THROWS_AS(write_density_csv(d, dir.path() / "no" / "dir.csv"), Error);
    CHECK_THROWS_AS(write_trajectory_csv({1.0}, dir.path() / "no" / "t.csv"),
                    Error);
  }
}
