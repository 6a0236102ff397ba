#pragma once

#include <stdexcept>
#include <string>

namespace haystack {

// Base class for all harness errors. Subclasses carry the error names used
// throughout the module contracts so callers can catch selectively.
class HaystackError : public std::runtime_error {
public:
    explicit HaystackError(const std::string& what) : std::runtime_error(what) {}
};

class MissingFileError : public HaystackError {
public:
    explicit MissingFileError(const std::string& path)
        : HaystackError("missing file: " + path), path(path) {}
    std::string path;
};

class MalformedRecordError : public HaystackError {
public:
    MalformedRecordError(const std::string& file, int line, const std::string& detail)
        : HaystackError(file + ":" + std::to_string(line) + ": " + detail),
          file(file), line(line), detail(detail) {}
    std::string file;
    int line;
    std::string detail;
};

class PlaceholderMismatchError : public HaystackError {
public:
    explicit PlaceholderMismatchError(const std::string& placeholder)
        : HaystackError("unresolved placeholder: {" + placeholder + "}"),
          placeholder(placeholder) {}
    std::string placeholder;
};

class InsufficientExamplesError : public HaystackError {
public:
    InsufficientExamplesError(const std::string& label, int have, int need)
        : HaystackError("class \"" + label + "\" has " + std::to_string(have) +
                        " examples, need " + std::to_string(need)),
          label(label), have(have), need(need) {}
    std::string label;
    int have;
    int need;
};

class FillerTooShortError : public HaystackError {
public:
    FillerTooShortError(std::size_t have, std::size_t need)
        : HaystackError("filler corpus has " + std::to_string(have) +
                        " tokens, need " + std::to_string(need)),
          have(have), need(need) {}
    std::size_t have;
    std::size_t need;
};

class SettingInputMissingError : public HaystackError {
public:
    explicit SettingInputMissingError(const std::string& what) : HaystackError(what) {}
};

class TaskNotInPromptError : public HaystackError {
public:
    explicit TaskNotInPromptError(const std::string& task)
        : HaystackError("task \"" + task + "\" has no block in this prompt"), task(task) {}
    std::string task;
};

class UnknownTaskError : public HaystackError {
public:
    explicit UnknownTaskError(const std::string& task)
        : HaystackError("unknown task: " + task), task(task) {}
    std::string task;
};

class GridEmptyError : public HaystackError {
public:
    GridEmptyError() : HaystackError("experiment grid is empty") {}
};

class LengthMismatchError : public HaystackError {
public:
    LengthMismatchError(std::size_t a, std::size_t b)
        : HaystackError("length mismatch: " + std::to_string(a) + " vs " + std::to_string(b)) {}
};

class EmptySetError : public HaystackError {
public:
    explicit EmptySetError(const std::string& what) : HaystackError(what) {}
};

class TooFewPairsError : public HaystackError {
public:
    explicit TooFewPairsError(std::size_t n)
        : HaystackError("paired test needs >= 2 pairs, got " + std::to_string(n)) {}
};

class EmptyNeedleError : public HaystackError {
public:
    EmptyNeedleError() : HaystackError("needle must be nonempty") {}
};

class EndpointUnavailableError : public HaystackError {
public:
    explicit EndpointUnavailableError(const std::string& detail)
        : HaystackError("endpoint unavailable: " + detail) {}
};

class LogprobsUnsupportedError : public HaystackError {
public:
    explicit LogprobsUnsupportedError(const std::string& detail)
        : HaystackError("endpoint does not return logprobs: " + detail) {}
};

class PortInUseError : public HaystackError {
public:
    explicit PortInUseError(int port)
        : HaystackError("port already in use: " + std::to_string(port)), port(port) {}
    int port;
};

class ManifestMismatchError : public HaystackError {
public:
    explicit ManifestMismatchError(const std::string& detail)
        : HaystackError("manifest digest mismatch: " + detail) {}
};

class MissingCellsError : public HaystackError {
public:
    explicit MissingCellsError(const std::string& detail)
        : HaystackError("incomplete results: " + detail) {}
};

class EmptyGridError : public HaystackError {
public:
    EmptyGridError() : HaystackError("heatmap grid is empty") {}
};

class ConfigError : public HaystackError {
public:
    explicit ConfigError(const std::string& detail) : HaystackError(detail) {}
};

} // namespace haystack
