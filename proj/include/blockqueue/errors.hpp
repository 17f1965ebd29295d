#pragma once

#include <stdexcept>
#include <string>

namespace blockqueue {

// Raised when an input object (matrix, distribution, config) violates its
// structural contract. The message carries a field path where applicable.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Raised when a numerical procedure cannot deliver its advertised accuracy
// (singular solve, non-converged iteration, ...).
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Raised when a steady-state computation is requested for a model that the
// drift condition classifies as not positive recurrent.
class UnstableModelError : public std::runtime_error {
public:
    explicit UnstableModelError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace blockqueue
