#ifndef P2C_TOLERANCES_H_
#define P2C_TOLERANCES_H_

namespace p2c {

// Numeric tolerances shared by tests, gradient checks, and invariants.
struct Tolerances {
  // Central finite-difference step for gradient checks (double precision).
  static constexpr double kFiniteDifferenceStep = 1e-5;
  // Maximum relative error between analytic and numeric gradients.
  static constexpr double kGradientRelativeError = 1e-4;
  // Denominator floor for the relative error, so that gradients that are
  // zero up to rounding are compared absolutely.
  static constexpr double kGradientScaleFloor = 1e-6;
  // A probability vector must sum to one within this.
  static constexpr double kSoftmaxSum = 1e-12;
  static constexpr double kAttentionSum = 1e-10;
  // Beam scores against a replay of decode steps.
  static constexpr double kScoreReplay = 1e-8;
  static constexpr double kMatmulAssociativity = 1e-10;
  static constexpr double kTraceRowSum = 1e-6;
};

}  // namespace p2c

#endif  // P2C_TOLERANCES_H_
