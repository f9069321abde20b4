#pragma once

#include <stdexcept>
#include <string>

namespace sepmi {

// Error kinds map onto process exit codes:
//   2 config/schema, 3 I/O, 4 non-convergence, 5 internal invariant violation.
enum class ErrorClass { Config, Io, NonConvergence, Internal };

struct Error : std::runtime_error {
  Error(ErrorClass c, const std::string& msg) : std::runtime_error(msg), cls(c) {}
  ErrorClass cls;
};

#define SEPMI_DEFINE_ERROR(Name, Class)                                      \
  struct Name : Error {                                                      \
    explicit Name(const std::string& msg) : Error(ErrorClass::Class, msg) {} \
  }

SEPMI_DEFINE_ERROR(NotPositiveDefinite, Internal);
SEPMI_DEFINE_ERROR(EmptyData, Internal);
SEPMI_DEFINE_ERROR(RaggedRows, Internal);
SEPMI_DEFINE_ERROR(ShapeMismatch, Internal);
SEPMI_DEFINE_ERROR(DimensionTooLarge, Internal);
SEPMI_DEFINE_ERROR(Infeasible, Internal);
SEPMI_DEFINE_ERROR(MaxIterations, NonConvergence);
SEPMI_DEFINE_ERROR(AnchorNotActive, Internal);
SEPMI_DEFINE_ERROR(ZeroAnchorRow, Internal);
SEPMI_DEFINE_ERROR(EvaluationFailure, Internal);
SEPMI_DEFINE_ERROR(SingularG, Internal);
SEPMI_DEFINE_ERROR(NoConvergence, NonConvergence);
SEPMI_DEFINE_ERROR(LineSearchFailure, NonConvergence);
SEPMI_DEFINE_ERROR(NonFiniteUtility, Internal);
SEPMI_DEFINE_ERROR(UnknownProduct, Internal);
SEPMI_DEFINE_ERROR(EmptyEvents, Internal);
SEPMI_DEFINE_ERROR(SliceNotOnGrid, Config);
SEPMI_DEFINE_ERROR(ConfigInvalid, Config);
SEPMI_DEFINE_ERROR(SchemaInvalid, Config);
SEPMI_DEFINE_ERROR(IoFailure, Io);

#undef SEPMI_DEFINE_ERROR

inline int exit_code_for(ErrorClass c) {
  switch (c) {
    case ErrorClass::Config: return 2;
    case ErrorClass::Io: return 3;
    case ErrorClass::NonConvergence: return 4;
    case ErrorClass::Internal: return 5;
  }
  return 5;
}

}  // namespace sepmi
