#pragma once

namespace curvebench {
struct Subspace;
}
