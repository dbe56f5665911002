// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace treeplan {

// Base for every error thrown by the library. Each module derives its own
// type carrying a kind enum so callers can branch without string matching.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <typename Kind>
class KindedError : public Error {
public:
    KindedError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
    [[nodiscard]] Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

} // namespace treeplan
