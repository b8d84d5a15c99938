#pragma once

namespace ddnn {

inline constexpr const char* kProjectVersion = "1.0.0";

// Per-module version tags, emitted into run manifests.
inline constexpr const char* kTensorCoreVersion = "1.0.0";
inline constexpr const char* kModelVersion      = "1.0.0";
inline constexpr const char* kExitPolicyVersion = "1.0.0";
inline constexpr const char* kDataVersion       = "1.0.0";
inline constexpr const char* kExperimentsVersion = "1.0.0";
inline constexpr const char* kCliVersion        = "1.0.0";

} // namespace ddnn
