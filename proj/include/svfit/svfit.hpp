#pragma once

#include "svfit/material.hpp"
#include "svfit/render.hpp"
#include "svfit/autodiff/tensor.hpp"
#include "svfit/autodiff/ops.hpp"
#include "svfit/autodiff/conv.hpp"
#include "svfit/autodiff/adam.hpp"
#include "svfit/autodiff/archive.hpp"
#include "svfit/maps_tensor.hpp"
#include "svfit/generator.hpp"
#include "svfit/procedural.hpp"
#include "svfit/trainer.hpp"
#include "svfit/loss.hpp"
#include "svfit/inversion.hpp"
#include "svfit/run_manifest.hpp"
#include "svfit/eval.hpp"
#include "svfit/io/png.hpp"
#include "svfit/io/bundle.hpp"
#include "svfit/io/homography.hpp"
#include "svfit/io/manifest.hpp"
#include "svfit/io/dataset.hpp"
