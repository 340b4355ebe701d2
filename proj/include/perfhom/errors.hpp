#ifndef PERFHOM_ERRORS_HPP
#define PERFHOM_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace perfhom {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define PERFHOM_DEFINE_ERROR(Name)                                   \
  struct Name : Error {                                              \
    explicit Name(const std::string& msg = #Name) : Error(msg) {}    \
  }

// geometry
PERFHOM_DEFINE_ERROR(HoleTouchesCellBoundary);
PERFHOM_DEFINE_ERROR(EmptyRobinPart);
PERFHOM_DEFINE_ERROR(EmptyNeumannPart);
PERFHOM_DEFINE_ERROR(HoleNotGridAligned);
PERFHOM_DEFINE_ERROR(EpsilonNotUnitFraction);

// fem
PERFHOM_DEFINE_ERROR(NonFiniteCoefficient);
PERFHOM_DEFINE_ERROR(UnknownLabel);
PERFHOM_DEFINE_ERROR(NotACellMesh);
PERFHOM_DEFINE_ERROR(NotConverged);
PERFHOM_DEFINE_ERROR(IncompatibleRHS);
PERFHOM_DEFINE_ERROR(NodeOutsideSource);

// coefficients
PERFHOM_DEFINE_ERROR(KernelUnresolved);
PERFHOM_DEFINE_ERROR(NonElliptic);

// cell
PERFHOM_DEFINE_ERROR(PointInsideHole);

// micro / macro
PERFHOM_DEFINE_ERROR(NegativeInitialData);
PERFHOM_DEFINE_ERROR(BlowUp);

// corrector
PERFHOM_DEFINE_ERROR(MeshMismatch);
PERFHOM_DEFINE_ERROR(TooFewPoints);
PERFHOM_DEFINE_ERROR(NonPositiveValue);

// cli
PERFHOM_DEFINE_ERROR(ParseError);
PERFHOM_DEFINE_ERROR(ValidationError);

#undef PERFHOM_DEFINE_ERROR

}  // namespace perfhom

#endif
