#pragma once

#include <stdexcept>
#include <string>

#include "trafficprint.h"

namespace tp {

// Core error type. Carries the public status code so the C layer can map
// exceptions to tp_status without string matching.
class Error : public std::runtime_error {
public:
    Error(tp_status code, std::string msg) : std::runtime_error(std::move(msg)), code_(code) {}
    tp_status code() const { return code_; }

private:
    tp_status code_;
};

[[noreturn]] inline void fail(tp_status code, const std::string& msg) { throw Error(code, msg); }

}  // namespace tp
