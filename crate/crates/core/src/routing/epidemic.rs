/// Epidemic anti-entropy: replicate whatever the peer's summary vector
/// (stored plus delivered ids) does not list.
pub fn should_replicate<K>(peer_knows: impl Fn(&K) -> bool, id: &K) -> bool {
    !peer_knows(id)
}
