// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace taskvec {

/// Broad failure class, used by the CLI to pick an exit code.
enum class ErrorKind {
    Validation,  // bad inputs or configuration (exit 1)
    Io,          // unreadable / unwritable files, malformed containers (exit 2)
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), mKind(kind) {}
    ErrorKind kind() const noexcept { return mKind; }

private:
    ErrorKind mKind;
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

/// Malformed container. `position` is the byte offset into the file where parsing failed.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t position)
        : Error(ErrorKind::Io, what + " (at byte " + std::to_string(position) + ")"), mPosition(position) {}
    std::size_t position() const noexcept { return mPosition; }

private:
    std::size_t mPosition;
};

/// Declared sizes or offsets inconsistent with shapes, dtypes or the data block.
class IntegrityError : public Error {
public:
    explicit IntegrityError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what) : Error(ErrorKind::Validation, what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorKind::Validation, what) {}
};

/// Tensor names or shapes do not line up. Carries the offending names.
class SchemaError : public Error {
public:
    SchemaError(const std::string& what, std::vector<std::string> names)
        : Error(ErrorKind::Validation, what), mNames(std::move(names)) {}
    const std::vector<std::string>& names() const noexcept { return mNames; }

private:
    std::vector<std::string> mNames;
};

/// A task vector is applied to a base whose schema fingerprint differs from the one it was extracted against.
class ProvenanceError : public Error {
public:
    explicit ProvenanceError(const std::string& what) : Error(ErrorKind::Validation, what) {}
};

}  // namespace taskvec
