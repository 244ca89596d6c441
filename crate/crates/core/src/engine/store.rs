use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Who wrote a post or triggered an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Actor {
    Agent(usize),
    News,
}

impl Serialize for Actor {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Actor::Agent(a) => s.serialize_u64(*a as u64),
            Actor::News => s.serialize_str("news"),
        }
    }
}

impl<'de> Deserialize<'de> for Actor {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct ActorVisitor;
        impl Visitor<'_> for ActorVisitor {
            type Value = Actor;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an agent id or \"news\"")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Actor, E> {
                Ok(Actor::Agent(v as usize))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Actor, E> {
                if v == "news" {
                    Ok(Actor::News)
                } else {
                    Err(E::custom(format!("unexpected actor {v:?}")))
                }
            }
        }
        d.deserialize_any(ActorVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub post_id: usize,
    pub thread_id: usize,
    pub author: Actor,
    /// Node the author sits on.
    pub node: usize,
    pub step: u64,
    pub text: String,
    pub stance_tag: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
struct Thread {
    posts: Vec<usize>,
    /// Sorted, deduplicated author nodes.
    author_nodes: Vec<usize>,
}

/// Append-only threads and posts. Thread and post ids are dense indices in
/// creation order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ThreadStore {
    threads: Vec<Thread>,
    posts: Vec<Post>,
}

impl ThreadStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_threads(&self) -> usize {
        self.threads.len()
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn thread_posts(&self, thread_id: usize) -> impl Iterator<Item = &Post> {
        self.threads[thread_id].posts.iter().map(|&p| &self.posts[p])
    }

    /// Appends a post; `thread_id = None` opens a new thread. Returns the
    /// (thread, post) ids, or `None` for an unknown thread.
    pub fn append(
        &mut self,
        thread_id: Option<usize>,
        author: Actor,
        node: usize,
        step: u64,
        text: String,
        stance_tag: Option<usize>,
    ) -> Option<(usize, usize)> {
        let thread_id = match thread_id {
            Some(t) if t < self.threads.len() => t,
            Some(_) => return None,
            None => {
                self.threads.push(Thread::default());
                self.threads.len() - 1
            }
        };
        let post_id = self.posts.len();
        self.posts.push(Post {
            post_id,
            thread_id,
            author,
            node,
            step,
            text,
            stance_tag,
        });
        let thread = &mut self.threads[thread_id];
        thread.posts.push(post_id);
        if let Err(i) = thread.author_nodes.binary_search(&node) {
            thread.author_nodes.insert(i, node);
        }
        Some((thread_id, post_id))
    }

    /// Up to `window` most recently created threads with a post from one of
    /// `followee_nodes` (sorted), newest first.
    pub fn recent_followed(&self, followee_nodes: &[usize], window: usize) -> Vec<usize> {
        (0..self.threads.len())
            .rev()
            .filter(|&t| {
                let authors = &self.threads[t].author_nodes;
                if authors.len() <= followee_nodes.len() {
                    authors.iter().any(|a| followee_nodes.binary_search(a).is_ok())
                } else {
                    followee_nodes.iter().any(|f| authors.binary_search(f).is_ok())
                }
            })
            .take(window)
            .collect()
    }

    /// Up to `window` most recently created threads, newest first.
    pub fn recent(&self, window: usize) -> Vec<usize> {
        (0..self.threads.len()).rev().take(window).collect()
    }

    /// Last `depth` posts of a thread, oldest first.
    pub fn tail(&self, thread_id: usize, depth: usize) -> impl Iterator<Item = &Post> {
        let ids = &self.threads[thread_id].posts;
        ids[ids.len().saturating_sub(depth)..].iter().map(|&p| &self.posts[p])
    }
}
