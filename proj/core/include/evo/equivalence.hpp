#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "evo/evolution.hpp"
#include "evo/tensor.hpp"

namespace evo {

/// Declarative description of one differential-testing scenario. Every weight
/// tensor and the input map derive deterministically from `seed` via the
/// documented per-family sub-seed schedule, so a spec pins a scenario down
/// completely.
///
/// Field use by family:
///   conv          h w d_in d_out k
///   sa / msa      + heads d_k (pos_kind absolute/relative adds d_p)
///   involution    d_out == d_in, reduction r, group count g
///   conv_as_msa   d_k doubles as the per-head value depth D_h (K^2 heads)
///   relpos_const  d_k d_p
///   channelwise   d_k
struct OperatorSpec {
  Family family = Family::conv;
  std::int64_t height = 4;
  std::int64_t width = 4;
  std::int64_t depth_in = 4;
  std::int64_t depth_out = 4;
  std::int64_t window = 3;
  std::int64_t heads = 1;
  std::int64_t groups = 1;
  std::int64_t reduction = 2;
  std::int64_t depth_k = 4;
  std::int64_t depth_p = 4;
  PosKind pos_kind = PosKind::none;
  std::uint64_t seed = 1;
  double tolerance = 1e-9;
};

struct KernelStats {
  bool spatially_constant = false;
  std::optional<std::int64_t> max_slice_rank;
};

struct EquivalenceReport {
  OperatorSpec spec;
  double max_abs_diff = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::int64_t classic_nanos = 0;
  std::int64_t evolution_nanos = 0;
  KernelStats kernel_stats;
};

/// run_scenario result envelope: either a report or the configuration error
/// that prevented the run.
struct ScenarioOutcome {
  std::optional<EquivalenceReport> report;
  std::string error;

  bool ok() const { return report.has_value(); }
};

struct CompareResult {
  double max_abs_diff = 0.0;
  bool pass = false;
};

/// Elementwise max |a - b| and the <= tol verdict. Mismatched shapes are a
/// ShapeError, not a failed comparison.
CompareResult compare_tensors(const Tensor& a, const Tensor& b, double tol);

/// Numerical rank by Gaussian elimination with partial pivoting: the count of
/// pivots whose magnitude exceeds tol times the largest candidate pivot.
std::int64_t matrix_rank(const Tensor& m, double tol = 1e-9);

/// True when every pixel carries a bit-identical K x K x N x D_out block.
bool spatially_constant(const EvolutionKernel& kern);

/// Throws ConfigError when the spec violates its family's preconditions.
void validate_spec(const OperatorSpec& spec);

/// The scenario's seeded input map plus the generation-function payload.
struct ScenarioInputs {
  Tensor x;
  EvolutionFunctionSpec fn;
};

/// Deterministic derivation of all scenario tensors from spec.seed.
ScenarioInputs derive_inputs(const OperatorSpec& spec);

/// Reference path for a generation function: the literal formula the family
/// comes from, computed without materializing an evolution kernel.
Tensor classic_output(const Tensor& x, const EvolutionFunctionSpec& fn);

/// Runs both paths, compares them, and fills the report. Invalid specs come
/// back as an error envelope instead of a throw.
ScenarioOutcome run_scenario(const OperatorSpec& spec);

}  // namespace evo
