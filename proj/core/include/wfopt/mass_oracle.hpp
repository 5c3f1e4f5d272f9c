#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

namespace wfopt {

// Nonnegative density on a regular grid over [0,1]^2, with an integer region
// label per cell. Mass integrals are plain cell sums times the uniform cell
// measure, so every identity checked against this model is exact up to
// floating-point roundoff.
class DiscreteDensity {
 public:
  DiscreteDensity(size_t cols, size_t rows);

  size_t cols() const { return cols_; }
  size_t rows() const { return rows_; }
  size_t cell_count() const { return values_.size(); }
  double cell_measure() const;  // 1 / (cols * rows)

  double value(size_t cell) const { return values_.at(cell); }
  void set_value(size_t cell, double v);
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& mutable_values() { return values_; }

  int region(size_t cell) const { return regions_.at(cell); }
  void set_region(size_t cell, int region) { regions_.at(cell) = region; }
  std::set<int> region_ids() const;
  std::vector<size_t> region_cells(int region) const;  // UnknownRegion

  std::pair<double, double> center(size_t cell) const;
  size_t cell_at(size_t col, size_t row) const { return row * cols_ + col; }

  void validate() const;  // nonnegativity

 private:
  size_t cols_;
  size_t rows_;
  std::vector<double> values_;
  std::vector<int> regions_;
};

double total_mass(const DiscreteDensity& density);
double region_mass(const DiscreteDensity& density, int region);

// Declared parameters of an edit kernel (what the edit is supposed to do).
struct KernelParams {
  double delta_target = 0.0;     // promised target-region mass reduction
  double pointwise_bound = 0.0;  // B: max |value change| outside the target
  double support_radius = 0.0;   // r: spillover band radius (grid units)
  int target_region = -1;
};

// Measured effect of one application.
struct KernelRealization {
  double delta_realized = 0.0;        // target-region mass drop
  double max_pointwise_change = 0.0;  // max |after - before| over all cells
  double spillover_mass = 0.0;        // sum |after - before| outside target
  size_t support_cells = 0;           // cells with any change
  double lipschitz_fd = 0.0;          // finite-difference bound on the input
};

// A density-to-density transformation. Results are clipped at zero and
// validated, so kernels cannot produce a signed density.
class EditKernel {
 public:
  using Fn = std::function<void(DiscreteDensity&)>;

  EditKernel(std::string name, KernelParams declared, Fn fn);

  const std::string& name() const { return name_; }
  const KernelParams& declared() const { return declared_; }
  void transform(DiscreteDensity& density) const { fn_(density); }

  static EditKernel identity();
  // Scales every value in the target region by (1 - fraction); removes
  // exactly fraction * region_mass.
  static EditKernel region_scale(int region, double fraction);
  // region_scale plus a bounded bump (height <= bound) sprayed on up to
  // band_cells cells outside the target, chosen by seed.
  static EditKernel region_scale_with_spill(int region, double fraction,
                                            double bound, size_t band_cells,
                                            uint64_t seed);

 private:
  std::string name_;
  KernelParams declared_;
  Fn fn_;
};

struct KernelApplication {
  DiscreteDensity density;
  KernelRealization realization;
};

KernelApplication apply_kernel(const DiscreteDensity& density,
                               const EditKernel& kernel);

// Checks M(after) <= M(before) - delta + epsilon_realized + 1e-9 where
// epsilon_realized is the measured positive mass added outside the target.
// applicable is false (reported, not thrown) when the target region was not
// actually reduced by at least delta.
struct TheoremCheck {
  bool applicable = false;
  bool holds = false;
  double slack = 0.0;  // rhs - lhs; >= -1e-9 when the bound holds
  double epsilon_realized = 0.0;
  double delta = 0.0;
};

TheoremCheck check_mass_reduction_bound(const DiscreteDensity& before,
                                        const DiscreteDensity& after,
                                        int target_region, double delta);

// Greedy descent over a kernel menu: each round applies the kernel with the
// largest net mass reduction, stopping after `rounds` rounds or as soon as
// the best improvement is <= 1e-9 (stationarity).
struct DescentResult {
  std::vector<double> trajectory;      // masses, starting with M(rho_0)
  std::vector<size_t> applied;         // menu indices actually applied
  DiscreteDensity final_density;
};

inline constexpr double kDescentStationarityTau = 1e-9;

DescentResult greedy_kernel_descent(const DiscreteDensity& rho0,
                                    const std::vector<EditKernel>& menu,
                                    size_t rounds);

// Randomized kernel satisfying the mass-reduction hypothesis on `density`:
// a real target-region reduction plus bounded spillover. delta_out (if
// non-null) receives the claimed delta.
EditKernel random_hypothesis_kernel(const DiscreteDensity& density,
                                    uint64_t seed, double* delta_out);

void write_density_csv(const DiscreteDensity& density,
                       const std::filesystem::path& path);
void write_trajectory_csv(const std::vector<double>& trajectory,
                          const std::filesystem::path& path);

}  // namespace wfopt
