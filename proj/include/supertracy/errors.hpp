#pragma once

#include <stdexcept>
#include <string>

namespace supertracy {

// Base class for all engine errors so callers can catch one type at the CLI
// boundary and map it to an exit code.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct MalformedCode : Error {
    explicit MalformedCode(const std::string& msg) : Error(msg) {}
};
struct UnknownCode : Error {
    explicit UnknownCode(const std::string& msg) : Error(msg) {}
};
struct UnknownLocation : Error {
    explicit UnknownLocation(const std::string& msg) : Error(msg) {}
};
struct InvalidConfig : Error {
    explicit InvalidConfig(const std::string& msg) : Error(msg) {}
};
struct SchemaMismatch : Error {
    explicit SchemaMismatch(const std::string& msg) : Error(msg) {}
};
struct InvalidRatios : Error {
    explicit InvalidRatios(const std::string& msg) : Error(msg) {}
};
struct StoreUnavailable : Error {
    explicit StoreUnavailable(const std::string& msg) : Error(msg) {}
};
struct ShapeMismatch : Error {
    explicit ShapeMismatch(const std::string& msg) : Error(msg) {}
};
struct EmptySequence : Error {
    explicit EmptySequence(const std::string& msg) : Error(msg) {}
};
struct IndexOutOfRange : Error {
    explicit IndexOutOfRange(const std::string& msg) : Error(msg) {}
};
struct EmptyTrainSet : Error {
    explicit EmptyTrainSet(const std::string& msg) : Error(msg) {}
};
struct InvalidBitWidth : Error {
    explicit InvalidBitWidth(const std::string& msg) : Error(msg) {}
};
struct EmptyMatrix : Error {
    explicit EmptyMatrix(const std::string& msg) : Error(msg) {}
};
struct DimensionMismatch : Error {
    explicit DimensionMismatch(const std::string& msg) : Error(msg) {}
};
struct InvalidChunking : Error {
    explicit InvalidChunking(const std::string& msg) : Error(msg) {}
};
struct DuplicateId : Error {
    explicit DuplicateId(const std::string& msg) : Error(msg) {}
};
struct EmptyIndex : Error {
    explicit EmptyIndex(const std::string& msg) : Error(msg) {}
};
struct UnboundVariable : Error {
    explicit UnboundVariable(const std::string& msg) : Error(msg) {}
};
struct MissingTemplate : Error {
    explicit MissingTemplate(const std::string& msg) : Error(msg) {}
};
struct UnknownBarcode : Error {
    explicit UnknownBarcode(const std::string& msg) : Error(msg) {}
};
struct InsufficientUnhappyParcels : Error {
    explicit InsufficientUnhappyParcels(const std::string& msg) : Error(msg) {}
};
struct BarcodeMismatch : Error {
    explicit BarcodeMismatch(const std::string& msg) : Error(msg) {}
};
struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace supertracy
