#pragma once

// Error taxonomy shared with the C API: every sbmr::Error carries one of
// these codes so the extern "C" layer can translate exceptions to status
// values without string matching.

#include <stdexcept>
#include <string>

namespace sbmr {

enum class ErrorCode : int {
    ok = 0,
    invalid_argument = 1,  // bad scalar input (negative u, rho out of range, ...)
    config = 2,            // invalid mechanism/experiment configuration
    blow_up = 3,           // PDE solution exceeded the blow-up guard
    resolution = 4,        // sweep failed to converge; finer grid advised
    explosion = 5,         // particle population exceeded the cap
    io = 6,                // file read/write failure
    internal = 7,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
    if (!cond) throw Error(code, what);
}

}  // namespace sbmr
