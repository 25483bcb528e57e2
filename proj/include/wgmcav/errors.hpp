#ifndef WGMCAV_ERRORS_HPP
#define WGMCAV_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace wgmcav
{
/// Invalid user input (geometry, grid, configuration values).
class ValidationError : public std::invalid_argument
{
public:
    ValidationError(std::string field, const std::string &message)
        : std::invalid_argument(message), field_(std::move(field))
    {
    }

    const std::string &field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Argument outside the domain where a quantity is defined (e.g. a
/// wavelength outside a dispersion table).
class DomainError : public std::domain_error
{
public:
    using std::domain_error::domain_error;
};

/// Numerical failure: instability, rank collapse, non-convergence.
class NumericalError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

} // namespace wgmcav

#endif // WGMCAV_ERRORS_HPP
