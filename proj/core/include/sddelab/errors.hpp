#pragma once
#include <stdexcept>
#include <string>

namespace sddelab {

// One exception type per failure mode so callers and tests can catch precisely.
#define SDDELAB_DEFINE_ERROR(Name)                                          \
  struct Name : std::runtime_error {                                        \
    explicit Name(const std::string& msg) : std::runtime_error(msg) {}      \
  }

SDDELAB_DEFINE_ERROR(NonAlignedHorizon);
SDDELAB_DEFINE_ERROR(InvalidDelay);
SDDELAB_DEFINE_ERROR(IndexUnderflow);
SDDELAB_DEFINE_ERROR(DimensionMismatch);
SDDELAB_DEFINE_ERROR(EvaluatorFailure);
SDDELAB_DEFINE_ERROR(EpsNotAligned);
SDDELAB_DEFINE_ERROR(EpsNotLessThanDelta);
SDDELAB_DEFINE_ERROR(NonFinite);
SDDELAB_DEFINE_ERROR(NoConvergence);
SDDELAB_DEFINE_ERROR(SingularRegression);
SDDELAB_DEFINE_ERROR(UnsupportedDiagonal);
SDDELAB_DEFINE_ERROR(RegimeUnsupported);
SDDELAB_DEFINE_ERROR(RiccatiBlowup);
SDDELAB_DEFINE_ERROR(TreeTooLarge);
SDDELAB_DEFINE_ERROR(InsufficientLadder);
SDDELAB_DEFINE_ERROR(ConfigInvalid);

#undef SDDELAB_DEFINE_ERROR

}  // namespace sddelab
