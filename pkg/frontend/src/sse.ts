// Server-sent event subscription for one session's stream. The constructor
// is injectable so Node tests can pass the "eventsource" package while the
// browser uses the native EventSource.

import type { BotTurn, FiringRecord, StateChange } from "./types.js";

export type StreamHandlers = {
  onBotTurn?: (turn: BotTurn) => void;
  onStateChange?: (change: StateChange) => void;
  onFiringRecord?: (record: FiringRecord) => void;
  onError?: (err: unknown) => void;
};

export type EventSourceLike = {
  addEventListener(type: string, listener: (event: MessageEvent) => void): void;
  close(): void;
  onerror: ((event: unknown) => void) | null;
};

export type EventSourceCtor = new (url: string) => EventSourceLike;

function defaultCtor(): EventSourceCtor {
  const ctor = (globalThis as { EventSource?: EventSourceCtor }).EventSource;
  if (!ctor) {
    throw new Error("no EventSource available; pass a constructor explicitly");
  }
  return ctor;
}

export function openEventStream(
  baseUrl: string,
  sessionId: string,
  handlers: StreamHandlers,
  EventSourceImpl: EventSourceCtor = defaultCtor(),
): EventSourceLike {
  const stream = new EventSourceImpl(`${baseUrl}/sessions/${sessionId}/events`);
  const forward = <T>(kind: string, handler?: (payload: T) => void) => {
    if (!handler) return;
    stream.addEventListener(kind, (event) => {
      handler(JSON.parse(event.data) as T);
    });
  };
  forward<BotTurn>("bot_turn", handlers.onBotTurn);
  forward<StateChange>("state_change", handlers.onStateChange);
  forward<FiringRecord>("firing_record", handlers.onFiringRecord);
  stream.onerror = (event) => {
    handlers.onError?.(event);
  };
  return stream;
}
