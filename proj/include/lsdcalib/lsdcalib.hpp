#pragma once

// Umbrella header.

#include "lsdcalib/se3.hpp"
#include "lsdcalib/noise_schedule.hpp"
#include "lsdcalib/geometry.hpp"
#include "lsdcalib/denoiser.hpp"
#include "lsdcalib/external_denoiser.hpp"
#include "lsdcalib/diffusion.hpp"
#include "lsdcalib/metrics.hpp"
#include "lsdcalib/kitti.hpp"
#include "lsdcalib/benchmark.hpp"
