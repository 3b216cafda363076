#pragma once

#include <stdexcept>
#include <string>

namespace catflow {

struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
    virtual const char* kind() const noexcept { return "error"; }
};

#define CATFLOW_ERROR(Name, tag)                                              \
    struct Name : Error {                                                     \
        explicit Name(const std::string& what) : Error(what) {}              \
        const char* kind() const noexcept override { return tag; }           \
    };

CATFLOW_ERROR(InvalidPointError, "invalid-point")
CATFLOW_ERROR(NonUniqueGeodesicError, "non-unique-geodesic")
CATFLOW_ERROR(AdmissibilityError, "admissibility")
CATFLOW_ERROR(PreconditionError, "precondition")
CATFLOW_ERROR(LevelRangeError, "level-out-of-range")
CATFLOW_ERROR(ResolutionError, "resolution")
CATFLOW_ERROR(RadiusError, "radius-too-large")
CATFLOW_ERROR(EmptyBoundaryError, "empty-boundary")
CATFLOW_ERROR(TraceMismatchError, "trace-mismatch")
CATFLOW_ERROR(NotHarmonicError, "not-certified-harmonic")
CATFLOW_ERROR(FlowInvariantError, "flow-invariant")
CATFLOW_ERROR(InconsistencyError, "inconsistency")
CATFLOW_ERROR(UsageError, "usage")
CATFLOW_ERROR(MissingArtifactError, "missing-artifact")

#undef CATFLOW_ERROR

}  // namespace catflow
