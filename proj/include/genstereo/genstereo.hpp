#pragma once

#include "genstereo/attention.hpp"
#include "genstereo/bytes.hpp"
#include "genstereo/checkpoint.hpp"
#include "genstereo/config.hpp"
#include "genstereo/coord_embed.hpp"
#include "genstereo/dataset.hpp"
#include "genstereo/denoiser.hpp"
#include "genstereo/diffusion.hpp"
#include "genstereo/error.hpp"
#include "genstereo/fusion.hpp"
#include "genstereo/grad_check.hpp"
#include "genstereo/gst.hpp"
#include "genstereo/metrics.hpp"
#include "genstereo/nn.hpp"
#include "genstereo/pfm.hpp"
#include "genstereo/pipeline.hpp"
#include "genstereo/png_io.hpp"
#include "genstereo/resample.hpp"
#include "genstereo/rng.hpp"
#include "genstereo/synthetic.hpp"
#include "genstereo/tensor.hpp"
#include "genstereo/warp.hpp"
