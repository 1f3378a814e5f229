#pragma once

#include <stdexcept>
#include <string>

namespace dfkd {

// One exception type with a category tag. The CLI maps the category to its
// machine-parsable error prefix, and tests assert on it.
class Error : public std::runtime_error {
public:
    enum class Kind {
        dimension,        // tensor/array shape disagreements
        parameter,        // invalid argument values (temperature <= 0, K out of range, ...)
        contract,         // violated operation preconditions (missing grad, empty split, ...)
        format,           // malformed files (bad magic, truncated payload, bad JSON)
        version,          // container version not understood
        io,               // missing/unreadable/unwritable files
        config_mismatch,  // incompatible configs (eval M vs dataset M, merge hash)
        metadata_missing, // teacher required but checkpoint carries no feature stats
    };

    Error(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

    const char* kind_name() const noexcept { return kind_name(kind_); }

    static const char* kind_name(Kind k) noexcept {
        switch (k) {
            case Kind::dimension: return "dimension";
            case Kind::parameter: return "parameter";
            case Kind::contract: return "contract";
            case Kind::format: return "format";
            case Kind::version: return "version";
            case Kind::io: return "io";
            case Kind::config_mismatch: return "config-mismatch";
            case Kind::metadata_missing: return "metadata-missing";
        }
        return "unknown";
    }

private:
    Kind kind_;
};

inline Error dimension_error(const std::string& msg) { return Error(Error::Kind::dimension, msg); }
inline Error parameter_error(const std::string& msg) { return Error(Error::Kind::parameter, msg); }
inline Error contract_error(const std::string& msg) { return Error(Error::Kind::contract, msg); }
inline Error format_error(const std::string& msg) { return Error(Error::Kind::format, msg); }
inline Error version_error(const std::string& msg) { return Error(Error::Kind::version, msg); }
inline Error io_error(const std::string& msg) { return Error(Error::Kind::io, msg); }
inline Error config_mismatch_error(const std::string& msg) { return Error(Error::Kind::config_mismatch, msg); }
inline Error metadata_missing_error(const std::string& msg) { return Error(Error::Kind::metadata_missing, msg); }

} // namespace dfkd
