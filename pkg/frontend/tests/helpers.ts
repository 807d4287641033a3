import type { FetchLike } from '../src/api';
import transcriptJson from './fixtures/transcript.json';

export interface Recorded {
  method: string;
  path: string;
  request: unknown;
  status: number;
  body: unknown;
}

export const transcript = transcriptJson as Recorded[];

export const chatRecords = transcript.filter((r) => r.path === '/v1/chat');
export const queryRecords = transcript.filter((r) => r.path === '/v1/query');
export const memoryRecords = transcript.filter((r) => r.path.endsWith('/memory'));
export const busyRecord = transcript.find((r) => r.status === 409)!;

function respond(rec: Recorded): Response {
  return new Response(JSON.stringify(rec.body), {
    status: rec.status,
    headers: { 'content-type': 'application/json' },
  });
}

/** Serve the captured service bytes: chat in order, queries by statement. */
export function replayFetch(records: Recorded[] = transcript): FetchLike {
  const chatQueue = records.filter((r) => r.path === '/v1/chat');
  return async (url, init) => {
    const method = init?.method ?? 'GET';
    if (url === '/v1/chat' && method === 'POST') {
      const rec = chatQueue.shift();
      if (!rec) throw new Error('chat transcript exhausted');
      return respond(rec);
    }
    if (url === '/v1/query' && method === 'POST') {
      const payload = JSON.parse(String(init?.body)) as { statement: string };
      const rec = records.find(
        (r) =>
          r.path === '/v1/query' &&
          (r.request as { statement: string }).statement === payload.statement,
      );
      if (!rec) throw new Error(`no fixture for statement ${payload.statement}`);
      return respond(rec);
    }
    const rec = records.find((r) => r.method === method && r.path === url);
    if (!rec) throw new Error(`no fixture for ${method} ${url}`);
    return respond(rec);
  };
}

/** A fetch that always answers with the captured 409 busy body. */
export function busyFetch(): FetchLike {
  return async () => respond(busyRecord);
}

export function failingFetch(): FetchLike {
  return async () => {
    throw new Error('network down');
  };
}
