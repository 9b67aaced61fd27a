// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace domainshift {

// Recorded in every run result so sweep outputs can be traced to the code
// that produced them.
inline constexpr const char* kCodeVersion = "domainshift 0.1.0";

}  // namespace domainshift
