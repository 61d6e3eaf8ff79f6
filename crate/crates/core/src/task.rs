//! Small futures plumbing used by the single-threaded engine: boxed futures,
//! a oneshot cell for completion signalling, and a two-way race.

use std::cell::RefCell;
use std::future::Future;
use std::pin::Pin;
use std::rc::Rc;
use std::task::{Context, Poll, Waker};

/// Boxed future type used across stage boundaries. The engine is single
/// threaded, so no `Send` bound.
pub type BoxFuture<T> = Pin<Box<dyn Future<Output = T>>>;

struct OneshotInner<T> {
    value: Option<T>,
    waker: Option<Waker>,
    sent: bool,
}

/// Sending half of a oneshot. Consumed by `send`.
pub struct OneshotSender<T> {
    inner: Rc<RefCell<OneshotInner<T>>>,
}

/// Receiving half of a oneshot; a future resolving to the sent value.
pub struct OneshotReceiver<T> {
    inner: Rc<RefCell<OneshotInner<T>>>,
}

/// Creates a oneshot pair. The receiver resolves once `send` is called.
pub fn oneshot<T>() -> (OneshotSender<T>, OneshotReceiver<T>) {
    let inner = Rc::new(RefCell::new(OneshotInner {
        value: None,
        waker: None,
        sent: false,
    }));
    (
        OneshotSender {
            inner: inner.clone(),
        },
        OneshotReceiver { inner },
    )
}

impl<T> OneshotSender<T> {
    /// Delivers the value and wakes the receiver if it is waiting. Dropped
    /// receivers are fine; the value is discarded.
    pub fn send(self, value: T) {
        let waker = {
            let mut inner = self.inner.borrow_mut();
            inner.value = Some(value);
            inner.sent = true;
            inner.waker.take()
        };
        if let Some(w) = waker {
            w.wake();
        }
    }
}

impl<T> Future for OneshotReceiver<T> {
    type Output = T;

    fn poll(self: Pin<&mut Self>, cx: &mut Context<'_>) -> Poll<T> {
        let mut inner = self.inner.borrow_mut();
        if let Some(v) = inner.value.take() {
            Poll::Ready(v)
        } else {
            assert!(!inner.sent, "oneshot polled after completion");
            inner.waker = Some(cx.waker().clone());
            Poll::Pending
        }
    }
}

/// Result of racing two futures.
pub enum Either<A, B> {
    Left(A),
    Right(B),
}

/// Future racing two futures; resolves with whichever finishes first.
/// The left side is polled first, so simultaneous completion favours it.
pub struct Race<FA, FB> {
    a: FA,
    b: FB,
}

/// Races `a` against `b`. The loser is dropped, not cancelled: any work it
/// represents elsewhere in the simulation keeps running.
pub fn race<FA: Future, FB: Future>(a: FA, b: FB) -> Race<FA, FB> {
    Race { a, b }
}

impl<FA: Future, FB: Future> Future for Race<FA, FB> {
    type Output = Either<FA::Output, FB::Output>;

    fn poll(self: Pin<&mut Self>, cx: &mut Context<'_>) -> Poll<Self::Output> {
        // Safety: we never move `a` or `b` out of the pinned struct.
        let this = unsafe { self.get_unchecked_mut() };
        let a = unsafe { Pin::new_unchecked(&mut this.a) };
        if let Poll::Ready(v) = a.poll(cx) {
            return Poll::Ready(Either::Left(v));
        }
        let b = unsafe { Pin::new_unchecked(&mut this.b) };
        if let Poll::Ready(v) = b.poll(cx) {
            return Poll::Ready(Either::Right(v));
        }
        Poll::Pending
    }
}
