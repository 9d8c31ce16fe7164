#pragma once

// Cooperative bird's-eye perception over simulated V2V links: feature
// transport across flat-Rician and OFDM multipath channels, attentive
// intermediate fusion, and self-supervised CAV-level adaptive weighting.

#include "coopv2v/autodiff.hpp"
#include "coopv2v/channel.hpp"
#include "coopv2v/detector.hpp"
#include "coopv2v/dft.hpp"
#include "coopv2v/harness.hpp"
#include "coopv2v/losses.hpp"
#include "coopv2v/metrics.hpp"
#include "coopv2v/nn.hpp"
#include "coopv2v/param_store.hpp"
#include "coopv2v/rng.hpp"
#include "coopv2v/scene.hpp"
#include "coopv2v/tensor.hpp"
#include "coopv2v/transport.hpp"
#include "coopv2v/weighting.hpp"
