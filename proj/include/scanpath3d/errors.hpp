#pragma once

#include <stdexcept>
#include <string>

namespace scanpath3d {

/// Coarse failure class; the CLI maps it to a process exit code.
enum class ErrorKind {
    kUsage = 2,
    kData = 3,
    kNumeric = 4,
};

class Error : public std::runtime_error {
   public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

   private:
    ErrorKind kind_;
};

#define SCANPATH3D_ERROR(Name, Kind)                                                   \
    class Name : public Error {                                                        \
       public:                                                                         \
        explicit Name(const std::string& what) : Error(ErrorKind::Kind, #Name ": " + what) {} \
    };

// geometry
SCANPATH3D_ERROR(ZeroVector, kData)
SCANPATH3D_ERROR(OutOfRange, kData)
// tensor engine
SCANPATH3D_ERROR(ShapeMismatch, kNumeric)
SCANPATH3D_ERROR(NonScalarLoss, kNumeric)
// model
SCANPATH3D_ERROR(ConfigMismatch, kUsage)
SCANPATH3D_ERROR(IndivisibleShape, kUsage)
SCANPATH3D_ERROR(SequenceTooLong, kUsage)
SCANPATH3D_ERROR(CacheInconsistent, kNumeric)
SCANPATH3D_ERROR(NumericalFailure, kNumeric)
SCANPATH3D_ERROR(DegenerateDistribution, kNumeric)
// metrics
SCANPATH3D_ERROR(PathTooShort, kData)
SCANPATH3D_ERROR(LengthMismatch, kData)
SCANPATH3D_ERROR(EmptyClusterSet, kData)
SCANPATH3D_ERROR(NoFixations, kData)
SCANPATH3D_ERROR(NoOverlappingImages, kData)
// io
SCANPATH3D_ERROR(ParseError, kData)
SCANPATH3D_ERROR(MissingImage, kData)
SCANPATH3D_ERROR(CoordinateOutOfRange, kData)
SCANPATH3D_ERROR(WidthNotDivisible, kData)
SCANPATH3D_ERROR(BadCheckpoint, kData)
SCANPATH3D_ERROR(ImageDecode, kData)
SCANPATH3D_ERROR(InvalidConfig, kUsage)

#undef SCANPATH3D_ERROR

}  // namespace scanpath3d
