//! Large zeroed buffers.
//!
//! On Linux, buffers of at least a few huge pages are marked with
//! `MADV_HUGEPAGE` before their first write, so faulting in an `n × n`
//! matrix takes thousands of faults instead of millions.

const HUGE_PAGE: usize = 2 << 20;

pub(crate) fn zeroed_f64(len: usize) -> Vec<f64> {
    let mut v = vec![0.0f64; len];
    advise(&mut v);
    v
}

pub(crate) fn zeroed_u32(len: usize) -> Vec<u32> {
    let mut v = vec![0u32; len];
    advise(&mut v);
    v
}

#[cfg(target_os = "linux")]
fn advise<T>(v: &mut [T]) {
    let bytes = std::mem::size_of_val(v);
    if bytes < 4 * HUGE_PAGE {
        return;
    }
    let addr = v.as_mut_ptr() as usize;
    let start = addr.next_multiple_of(HUGE_PAGE);
    let end = (addr + bytes) / HUGE_PAGE * HUGE_PAGE;
    if end > start {
        // SAFETY: the range lies inside the live allocation; the advice only
        // changes how the kernel backs it and never its contents.
        unsafe {
            libc::madvise(start as *mut libc::c_void, end - start, libc::MADV_HUGEPAGE);
        }
    }
}

#[cfg(not(target_os = "linux"))]
fn advise<T>(_: &mut [T]) {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buffers_are_zeroed() {
        for len in [0, 1, 10, 3 << 20] {
            assert!(zeroed_f64(len).iter().all(|&v| v == 0.0));
            assert!(zeroed_u32(len).iter().all(|&v| v == 0));
        }
    }
}
