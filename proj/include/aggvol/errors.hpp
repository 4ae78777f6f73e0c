#pragma once

#include <stdexcept>
#include <string>

namespace aggvol {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// --- matrix algebra ---

class NonSquare : public Error {
public:
    using Error::Error;
};

class AsymmetryExceedsTolerance : public Error {
public:
    using Error::Error;
};

class NotPositiveDefinite : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

// --- data handling ---

class EmptyPanel : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, std::size_t column, const std::string& msg)
        : Error("parse error at line " + std::to_string(line) + ", column " +
                std::to_string(column) + ": " + msg),
          line(line),
          column(column) {}

    std::size_t line;
    std::size_t column;
};

class NonMonotoneDates : public Error {
public:
    using Error::Error;
};

class MissingFactorColumn : public Error {
public:
    using Error::Error;
};

// --- estimators ---

class InsufficientHistory : public Error {
public:
    using Error::Error;
};

/// Local-linear design has no usable mass around the evaluation point.
/// Consumers fall back to the time-domain estimator (weight 0).
class DegenerateDesign : public Error {
public:
    using Error::Error;
};

class AllCandidatesDegenerate : public Error {
public:
    using Error::Error;
};

class DensityZeroWithPositiveOmega : public Error {
public:
    using Error::Error;
};

// --- simulation ---

class NonPositiveState : public Error {
public:
    using Error::Error;
};

class NoisePSDViolation : public Error {
public:
    using Error::Error;
};

class MaturityOutOfRange : public Error {
public:
    using Error::Error;
};

class StepTooLarge : public Error {
public:
    using Error::Error;
};

// --- evaluation ---

class TruthNotPD : public Error {
public:
    using Error::Error;
};

class Misalignment : public Error {
public:
    using Error::Error;
};

class WindowOutOfRange : public Error {
public:
    using Error::Error;
};

class InsufficientReplications : public Error {
public:
    using Error::Error;
};

class InsufficientData : public Error {
public:
    InsufficientData(const std::string& msg, std::size_t required)
        : Error(msg + " (minimum length " + std::to_string(required) + ")"),
          required(required) {}

    std::size_t required;
};

}  // namespace aggvol
