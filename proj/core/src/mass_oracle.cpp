#include "wfopt/mass_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "wfopt/errors.hpp"
#include "wfopt/rng.hpp"

namespace wfopt {

DiscreteDensity::DiscreteDensity(size_t cols, size_t rows)
    : cols_(cols), rows_(rows), values_(cols * rows, 0.0),
      regions_(cols * rows, 0) {
  if (cols == 0 || rows == 0) {
    fail(ErrorCode::MalformedArgs, "grid must have positive extent");
  }
}

double DiscreteDensity::cell_measure() const {
  return 1.0 / static_cast<double>(cols_ * rows_);
}

void DiscreteDensity::set_value(size_t cell, double v) {
  if (v < 0.0) fail(ErrorCode::MalformedArgs, "negative density value");
  values_.at(cell) = v;
}

std::set<int> DiscreteDensity::region_ids() const {
  return std::set<int>(regions_.begin(), regions_.end());
}

std::vector<size_t> DiscreteDensity::region_cells(int region) const {
  std::vector<size_t> out;
  for (size_t i = 0; i < regions_.size(); ++i) {
    if (regions_[i] == region) out.push_back(i);
  }
  if (out.empty()) {
    fail(ErrorCode::UnknownRegion, "region " + std::to_string(region));
  }
  return out;
}

std::pair<double, double> DiscreteDensity::center(size_t cell) const {
  size_t row = cell / cols_;
  size_t col = cell % cols_;
  return {(static_cast<double>(col) + 0.5) / static_cast<double>(cols_),
          (static_cast<double>(row) + 0.5) / static_cast<double>(rows_)};
}

void DiscreteDensity::validate() const {
  for (double v : values_) {
    if (!(v >= 0.0)) fail(ErrorCode::MalformedArgs, "negative density value");
  }
}

double total_mass(const DiscreteDensity& density) {
  double sum = 0.0;
  for (double v : density.values()) sum += v;
  return sum * density.cell_measure();
}

double region_mass(const DiscreteDensity& density, int region) {
  double sum = 0.0;
  bool found = false;
  for (size_t i = 0; i < density.cell_count(); ++i) {
    if (density.region(i) == region) {
      sum += density.value(i);
      found = true;
    }
  }
  if (!found) {
    fail(ErrorCode::UnknownRegion, "region " + std::to_string(region));
  }
  return sum * density.cell_measure();
}

EditKernel::EditKernel(std::string name, KernelParams declared, Fn fn)
    : name_(std::move(name)), declared_(declared), fn_(std::move(fn)) {}

EditKernel EditKernel::identity() {
  return EditKernel("identity", KernelParams{}, [](DiscreteDensity&) {});
}

EditKernel EditKernel::region_scale(int region, double fraction) {
  KernelParams params;
  params.target_region = region;
  params.delta_target = fraction;  // as a fraction of region mass
  return EditKernel(
      "region_scale(" + std::to_string(region) + ")", params,
      [region, fraction](DiscreteDensity& d) {
        for (size_t i = 0; i < d.cell_count(); ++i) {
          if (d.region(i) == region) {
            d.set_value(i, d.value(i) * (1.0 - fraction));
          }
        }
      });
}

EditKernel EditKernel::region_scale_with_spill(int region, double fraction,
                                               double bound, size_t band_cells,
                                               uint64_t seed) {
  KernelParams params;
  params.target_region = region;
  params.delta_target = fraction;
  params.pointwise_bound = bound;
  params.support_radius = static_cast<double>(band_cells);
  return EditKernel(
      "region_scale_with_spill(" + std::to_string(region) + ")", params,
      [region, fraction, bound, band_cells, seed](DiscreteDensity& d) {
        std::vector<size_t> outside;
        for (size_t i = 0; i < d.cell_count(); ++i) {
          if (d.region(i) == region) {
            d.set_value(i, d.value(i) * (1.0 - fraction));
          } else {
            outside.push_back(i);
          }
        }
        Rng rng(mix_seed(seed, "spill"));
        size_t n = std::min(band_cells, outside.size());
        if (n == 0) return;
        std::vector<size_t> picks =
            sample_without_replacement(outside.size(), n, rng);
        for (size_t p : picks) {
          size_t cell = outside[p];
          d.set_value(cell, d.value(cell) + rng.uniform() * bound);
        }
      });
}

KernelApplication apply_kernel(const DiscreteDensity& density,
                               const EditKernel& kernel) {
  KernelApplication app{density, {}};
  kernel.transform(app.density);
  // Clip at zero: a kernel may not leave a signed density behind.
  for (size_t i = 0; i < app.density.cell_count(); ++i) {
    if (app.density.value(i) < 0.0) app.density.set_value(i, 0.0);
  }
  app.density.validate();

  KernelRealization& real = app.realization;
  double mu = density.cell_measure();
  int target = kernel.declared().target_region;
  double target_drop = 0.0;
  for (size_t i = 0; i < density.cell_count(); ++i) {
    double change = app.density.value(i) - density.value(i);
    if (change != 0.0) ++real.support_cells;
    real.max_pointwise_change =
        std::max(real.max_pointwise_change, std::abs(change));
    if (density.region(i) == target) {
      target_drop += -change;
    } else {
      real.spillover_mass += std::abs(change) * mu;
    }
  }
  real.delta_realized = target_drop * mu;

  // Finite-difference smoothness bound of the input density: the largest
  // value jump between horizontally or vertically adjacent cells, divided by
  // the cell spacing.
  double max_jump = 0.0;
  for (size_t row = 0; row < density.rows(); ++row) {
    for (size_t col = 0; col < density.cols(); ++col) {
      size_t cell = density.cell_at(col, row);
      if (col + 1 < density.cols()) {
        max_jump = std::max(
            max_jump,
            std::abs(density.value(density.cell_at(col + 1, row)) -
                     density.value(cell)) * static_cast<double>(density.cols()));
      }
      if (row + 1 < density.rows()) {
        max_jump = std::max(
            max_jump,
            std::abs(density.value(density.cell_at(col, row + 1)) -
                     density.value(cell)) * static_cast<double>(density.rows()));
      }
    }
  }
  real.lipschitz_fd = max_jump;
  return app;
}

TheoremCheck check_mass_reduction_bound(const DiscreteDensity& before,
                                        const DiscreteDensity& after,
                                        int target_region, double delta) {
  if (before.cell_count() != after.cell_count()) {
    fail(ErrorCode::DimensionMismatch, "grids differ in size");
  }
  before.region_cells(target_region);  // UnknownRegion if absent

  TheoremCheck check;
  check.delta = delta;
  double mu = before.cell_measure();

  double target_drop = 0.0;
  double eps = 0.0;
  for (size_t i = 0; i < before.cell_count(); ++i) {
    double change = after.value(i) - before.value(i);
    if (before.region(i) == target_region) {
      target_drop += -change;
    } else if (change > 0.0) {
      eps += change;
    }
  }
  target_drop *= mu;
  eps *= mu;
  check.epsilon_realized = eps;

  // Hypothesis: the edit actually removed at least delta from the target.
  check.applicable = target_drop + 1e-12 >= delta;
  double lhs = total_mass(after);
  double rhs = total_mass(before) - delta + eps;
  check.slack = rhs - lhs;
  check.holds = check.applicable && check.slack >= -1e-9;
  return check;
}

DescentResult greedy_kernel_descent(const DiscreteDensity& rho0,
                                    const std::vector<EditKernel>& menu,
                                    size_t rounds) {
  if (menu.empty()) fail(ErrorCode::MalformedArgs, "empty kernel menu");
  DescentResult result{{}, {}, rho0};
  result.trajectory.push_back(total_mass(rho0));

  for (size_t round = 0; round < rounds; ++round) {
    double current = result.trajectory.back();
    double best_reduction = 0.0;
    size_t best_index = menu.size();
    DiscreteDensity best_density = result.final_density;
    for (size_t i = 0; i < menu.size(); ++i) {
      KernelApplication app = apply_kernel(result.final_density, menu[i]);
      double reduction = current - total_mass(app.density);
      if (reduction > best_reduction) {
        best_reduction = reduction;
        best_index = i;
        best_density = std::move(app.density);
      }
    }
    if (best_index == menu.size() || best_reduction <= kDescentStationarityTau) {
      break;  // stationary: no kernel buys a measurable reduction
    }
    result.final_density = std::move(best_density);
    result.applied.push_back(best_index);
    result.trajectory.push_back(current - best_reduction);
  }
  return result;
}

EditKernel random_hypothesis_kernel(const DiscreteDensity& density,
                                    uint64_t seed, double* delta_out) {
  Rng rng(mix_seed(seed, "hypothesis_kernel"));
  std::set<int> ids = density.region_ids();
  std::vector<int> positive;
  for (int id : ids) {
    if (region_mass(density, id) > 0.0) positive.push_back(id);
  }
  if (positive.empty()) {
    fail(ErrorCode::InsufficientData, "density has no mass to reduce");
  }
  int region = positive[rng.uniform_index(positive.size())];
  double fraction = rng.uniform(0.2, 0.9);
  double bound = rng.uniform(0.0, 0.5);
  size_t band = static_cast<size_t>(rng.uniform_index(64));
  // Claim slightly less than the exact removal so roundoff in the realized
  // reduction can never undercut the hypothesis.
  double delta = fraction * region_mass(density, region) * (1.0 - 1e-9);
  if (delta_out != nullptr) *delta_out = delta;
  EditKernel inner = EditKernel::region_scale_with_spill(
      region, fraction, bound, band, mix_seed(seed, "spill_seed"));
  KernelParams params = inner.declared();
  params.delta_target = delta;
  return EditKernel("hypothesis_kernel", params,
                    [inner](DiscreteDensity& d) { inner.transform(d); });
}

void write_density_csv(const DiscreteDensity& density,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoFailure, "cannot write " + path.string());
  out << "cell,x,y,region,value\n";
  char buf[64];
  for (size_t i = 0; i < density.cell_count(); ++i) {
    auto [x, y] = density.center(i);
    out << i << ",";
    std::snprintf(buf, sizeof buf, "%.17g", x);
    out << buf << ",";
    std::snprintf(buf, sizeof buf, "%.17g", y);
    out << buf << "," << density.region(i) << ",";
    std::snprintf(buf, sizeof buf, "%.17g", density.value(i));
    out << buf << "\n";
  }
}

void write_trajectory_csv(const std::vector<double>& trajectory,
                          const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoFailure, "cannot write " + path.string());
  out << "round,mass\n";
  char buf[64];
  for (size_t i = 0; i < trajectory.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", trajectory[i]);
    out << i << "," << buf << "\n";
  }
}

}  // namespace wfopt
