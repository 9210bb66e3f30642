//! The encoder never allocates an `L × L` buffer for the stage grid.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicUsize, Ordering};

use hrsam_core::encoder::{encoder_forward, EncoderConfig, EncoderWeights, ForwardOptions, Variant};
use hrsam_core::rng::rng_fill;

struct Largest;

static LARGEST: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Largest {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        LARGEST.fetch_max(layout.size(), Ordering::Relaxed);
        System.alloc(layout)
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout)
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        LARGEST.fetch_max(new_size, Ordering::Relaxed);
        System.realloc(ptr, layout, new_size)
    }
}

#[global_allocator]
static GLOBAL: Largest = Largest;

#[test]
fn no_quadratic_buffer_at_1024() {
    for variant in [Variant::Hrsam, Variant::HrsamPlusPlus] {
        let cfg = EncoderConfig::tiny().with_variant(variant);
        let weights = EncoderWeights::<f32>::init(&cfg, 3).unwrap();
        let img = rng_fill::<f32>(&[1024, 1024, 3], 4, 0.0, 1.0).unwrap();
        LARGEST.store(0, Ordering::Relaxed);
        let out = encoder_forward(&img, &cfg, &weights, &ForwardOptions::default()).unwrap();
        let largest = LARGEST.load(Ordering::Relaxed);
        assert_eq!(out.shape(), [64, 64, 256]);
        let l = 64 * 64;
        let quadratic = l * l * std::mem::size_of::<f32>();
        assert!(largest < quadratic, "{variant:?}: {largest} bytes ≥ {quadratic}");
    }
}
