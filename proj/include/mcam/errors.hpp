#pragma once

#include <stdexcept>
#include <string>

namespace mcam {

// Every library error carries a short machine-readable category so the CLI
// can print "error: <category>: <message>" and pick an exit code.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& message)
        : std::runtime_error(message), category_(std::move(category)) {}

    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

#define MCAM_DEFINE_ERROR(Name, tag)                                   \
    class Name : public Error {                                        \
    public:                                                            \
        explicit Name(const std::string& message) : Error(tag, message) {} \
    };

MCAM_DEFINE_ERROR(ParameterError, "parameter")
MCAM_DEFINE_ERROR(DimensionError, "dimension")
MCAM_DEFINE_ERROR(NumericError, "numeric")
MCAM_DEFINE_ERROR(StagingError, "staging")
MCAM_DEFINE_ERROR(PoolError, "pool")
MCAM_DEFINE_ERROR(DataError, "data")
MCAM_DEFINE_ERROR(FeasibilityError, "feasibility")
MCAM_DEFINE_ERROR(IntegrityError, "integrity")
MCAM_DEFINE_ERROR(InputError, "input")
MCAM_DEFINE_ERROR(ValidationError, "validation")
MCAM_DEFINE_ERROR(FormatError, "format")
MCAM_DEFINE_ERROR(DecompositionError, "decomposition")
MCAM_DEFINE_ERROR(GenerationError, "generation")
MCAM_DEFINE_ERROR(CompatibilityError, "compatibility")
MCAM_DEFINE_ERROR(IoError, "io")

#undef MCAM_DEFINE_ERROR

}  // namespace mcam
