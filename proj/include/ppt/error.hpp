#pragma once

#include <stdexcept>
#include <string>

namespace ppt {

enum class Errc {
  invalid_argument,
  non_square,
  row_sum_nonzero,
  negative_off_diagonal,
  reducible,
  rate_mismatch,
  singular_system,
  sup_bound_violated,
  quadrature_unavailable,
  state_space_too_large,
  solver_failure,
  tolerance_exceeded,
  zero_mean_rate,
  infinite_entry,
  unbalanced,
  parse_error,
};

inline const char* to_string(Errc c) noexcept {
  switch (c) {
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::non_square: return "NonSquare";
    case Errc::row_sum_nonzero: return "RowSumNonzero";
    case Errc::negative_off_diagonal: return "NegativeOffDiagonal";
    case Errc::reducible: return "Reducible";
    case Errc::rate_mismatch: return "RateMismatch";
    case Errc::singular_system: return "SingularSystem";
    case Errc::sup_bound_violated: return "SupBoundViolated";
    case Errc::quadrature_unavailable: return "QuadratureUnavailable";
    case Errc::state_space_too_large: return "StateSpaceTooLarge";
    case Errc::solver_failure: return "SolverFailure";
    case Errc::tolerance_exceeded: return "ToleranceExceeded";
    case Errc::zero_mean_rate: return "ZeroMeanRate";
    case Errc::infinite_entry: return "InfiniteEntry";
    case Errc::unbalanced: return "Unbalanced";
    case Errc::parse_error: return "ParseError";
  }
  return "Unknown";
}

/// Every failure raised by the library. The message starts with the
/// diagnostic name, e.g. "RowSumNonzero(0): ...".
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(detail), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace ppt
