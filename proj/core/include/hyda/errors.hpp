#pragma once

#include <stdexcept>
#include <string>

namespace hyda {

// Error taxonomy shared by the whole library. The CLI maps these onto
// process exit codes (see tools/).
struct HydaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : HydaError { using HydaError::HydaError; };
struct ConfigError : HydaError { using HydaError::HydaError; };
struct FormatError : HydaError { using HydaError::HydaError; };
struct NumericError : HydaError { using HydaError::HydaError; };
struct LabelError : HydaError { using HydaError::HydaError; };
struct MetricError : HydaError { using HydaError::HydaError; };
struct StructureError : HydaError { using HydaError::HydaError; };
struct InternalError : HydaError { using HydaError::HydaError; };

}  // namespace hyda
