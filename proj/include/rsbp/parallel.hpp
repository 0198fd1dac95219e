#pragma once

namespace rsbp {

/// Serial runs the reference loop; Parallel distributes independent work with OpenMP.
/// Both produce bit-identical results.
enum class Exec { Serial, Parallel };

int hardware_threads();
void set_worker_threads(int n);

}  // namespace rsbp
