#pragma once

#include <stdexcept>
#include <string>

namespace pamlab {

// Base class for every error raised by the library. `module()` names the
// component that raised it so the CLI can tag runtime failures.
class Error : public std::runtime_error {
public:
    Error(std::string module, const std::string& what)
        : std::runtime_error(what), module_(std::move(module)) {}

    const std::string& module() const noexcept { return module_; }

private:
    std::string module_;
};

class InvalidInput : public Error {
public:
    InvalidInput(std::string module, const std::string& what) : Error(std::move(module), what) {}
};

class CutLocusError : public Error {
public:
    explicit CutLocusError(const std::string& what) : Error("manifold", what) {}
};

class TruncationError : public Error {
public:
    TruncationError(const std::string& what, int required_band)
        : Error("spectral", what), required_band_(required_band) {}

    int required_band() const noexcept { return required_band_; }

private:
    int required_band_;
};

class DegenerateKernelError : public Error {
public:
    explicit DegenerateKernelError(const std::string& what) : Error("spectral", what) {}
};

class PreconditionError : public Error {
public:
    PreconditionError(std::string module, const std::string& what) : Error(std::move(module), what) {}
};

class NonConvergenceError : public Error {
public:
    NonConvergenceError(std::string module, const std::string& what) : Error(std::move(module), what) {}
};

class BlowupError : public Error {
public:
    BlowupError(const std::string& what, long step) : Error("solver", what), step_(step) {}

    long step() const noexcept { return step_; }

private:
    long step_;
};

}  // namespace pamlab
