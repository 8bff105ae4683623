// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace great {

enum class ErrorKind {
    validation,
    parse,
    format,
    range,
    config,
    argument,
    sampling,
    generation,
    shape,
    domain,
    undefined_metric,
    io,
    backend,
    fixture_miss,
    protocol,
    numeric,
};

// Single exception type for the whole library. The kind maps onto the CLI
// exit-code contract: validation-class errors exit 1, backend-class errors
// exit 2, numerical divergence exits 3.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    static int exit_code(ErrorKind kind) noexcept {
        switch (kind) {
            case ErrorKind::backend:
            case ErrorKind::fixture_miss:
            case ErrorKind::protocol:
                return 2;
            case ErrorKind::numeric:
                return 3;
            default:
                return 1;
        }
    }

    int exit_code() const noexcept { return exit_code(kind_); }

private:
    ErrorKind kind_;
};

}  // namespace great
