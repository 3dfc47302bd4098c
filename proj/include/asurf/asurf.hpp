#pragma once

#include "camera.hpp"
#include "checkpoint.hpp"
#include "config.hpp"
#include "dataset.hpp"
#include "density.hpp"
#include "eval.hpp"
#include "field.hpp"
#include "grad.hpp"
#include "image.hpp"
#include "image_io.hpp"
#include "init.hpp"
#include "intersect.hpp"
#include "loss.hpp"
#include "optim.hpp"
#include "parallel.hpp"
#include "ply.hpp"
#include "render.hpp"
#include "scene.hpp"
#include "train.hpp"
#include "vec.hpp"
