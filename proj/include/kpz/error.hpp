#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace kpz {

enum class Errc {
    ZeroDrift,
    NegativeDrift,
    Reducible,
    Empty,
    InvalidRate,
    OutOfWindow,
    ZeroDisplacement,
    BoundarySite,
    IncompatibleBoundary,
    Frozen,
    SiteOutsideWindow,
    TimeMismatch,
    WindowTooSmall,
    InvalidArgument,
    NoSamples,
    NonDecayingProfile,
    TooLarge,
    NotNearestNeighbor,
    NotTASEP,
    Degenerate,
    NotMeanZero,
    NoCycleFound,
    SingularForm,
    ParseError,
    ValidationError,
    IoError,
    OutOfRange,
};

inline std::string_view to_string(Errc c)
{
    switch (c) {
    case Errc::ZeroDrift: return "ZeroDrift";
    case Errc::NegativeDrift: return "NegativeDrift";
    case Errc::Reducible: return "Reducible";
    case Errc::Empty: return "Empty";
    case Errc::InvalidRate: return "InvalidRate";
    case Errc::OutOfWindow: return "OutOfWindow";
    case Errc::ZeroDisplacement: return "ZeroDisplacement";
    case Errc::BoundarySite: return "BoundarySite";
    case Errc::IncompatibleBoundary: return "IncompatibleBoundary";
    case Errc::Frozen: return "Frozen";
    case Errc::SiteOutsideWindow: return "SiteOutsideWindow";
    case Errc::TimeMismatch: return "TimeMismatch";
    case Errc::WindowTooSmall: return "WindowTooSmall";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::NoSamples: return "NoSamples";
    case Errc::NonDecayingProfile: return "NonDecayingProfile";
    case Errc::TooLarge: return "TooLarge";
    case Errc::NotNearestNeighbor: return "NotNearestNeighbor";
    case Errc::NotTASEP: return "NotTASEP";
    case Errc::Degenerate: return "Degenerate";
    case Errc::NotMeanZero: return "NotMeanZero";
    case Errc::NoCycleFound: return "NoCycleFound";
    case Errc::SingularForm: return "SingularForm";
    case Errc::ParseError: return "ParseError";
    case Errc::ValidationError: return "ValidationError";
    case Errc::IoError: return "IoError";
    case Errc::OutOfRange: return "OutOfRange";
    }
    return "Unknown";
}

// Library error. `cause` carries the module error wrapped by a ValidationError.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what, std::optional<Errc> cause = std::nullopt)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), cause_(cause)
    {
    }

    Errc code() const noexcept { return code_; }
    std::optional<Errc> cause() const noexcept { return cause_; }

private:
    Errc code_;
    std::optional<Errc> cause_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

} // namespace kpz
